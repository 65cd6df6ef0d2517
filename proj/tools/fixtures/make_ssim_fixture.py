"""Regenerates tests/fixtures/ssim_pair.txt with scikit-image as the reference SSIM."""
import numpy as np
from skimage.metrics import structural_similarity

rng = np.random.default_rng(20240611)
yy, xx = np.mgrid[0:32, 0:32]
a = 0.5 + 0.3 * np.sin(xx / 3.0) * np.cos(yy / 5.0) + 0.05 * rng.standard_normal((32, 32))
b = 0.8 * a + 0.1 + 0.08 * rng.standard_normal((32, 32))
a = a.astype(np.float32).astype(np.float64)
b = b.astype(np.float32).astype(np.float64)
value = structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0)
with open("tests/fixtures/ssim_pair.txt", "w") as f:
    f.write("32 32\n")
    f.write(f"{value:.12f}\n")
    for img in (a, b):
        f.write(" ".join(f"{v:.9g}" for v in img.ravel()) + "\n")
print(value)
