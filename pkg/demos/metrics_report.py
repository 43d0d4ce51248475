"""
PSNR, SSIM and the summary line
===============================
"""
import numpy as np

from biplanar import aggregate, psnr, ssim
from biplanar.metrics import evaluate_case

z = np.zeros((16, 16, 16))
print("black vs white:", psnr(z, z + 4095), "dB")
print("off by a tenth of the range:", psnr(z + 409.5, z), "dB")
print("identical:", psnr(z, z))

rng = np.random.default_rng(0)
target = rng.uniform(0, 4095, (16, 16, 16))
cases = []
for i, sigma in enumerate((50, 150, 400)):
    pred = np.clip(target + rng.normal(0, sigma, target.shape), 0, 4095)
    cases.append(evaluate_case(pred, target, f"case{i}"))
print("SSIM of the noisiest case:", ssim(pred, target))
print(aggregate(cases).text())
