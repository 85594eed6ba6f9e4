"""Score reconstructions with the color PSNR and SSIM measures.

Builds a textured test image, then compares two corruptions tuned to the same
mean squared error: additive noise and Gaussian blur. PSNR cannot tell them
apart by construction; the structural score penalizes the blur more because
it wipes out local pattern. A severity sweep on plain noise follows.
"""

import numpy as np
from scipy import ndimage

from bjdd.metrics import color_ssim, cpsnr, psnr, ssim


def make_image(size=48, seed=1):
    rng = np.random.default_rng(seed)
    coarse = rng.random((3, 6, 6))
    img = ndimage.zoom(coarse, (1, size / 6, size / 6), order=3)
    yy, xx = np.mgrid[0:size, 0:size]
    texture = 0.08 * np.sin(yy * 1.1) * np.cos(xx * 0.9)
    return np.clip(img + texture, 0.0, 1.0)


def main():
    clean = make_image()

    blurred = np.stack([ndimage.gaussian_filter(c, 1.2) for c in clean])
    level = np.sqrt(((clean - blurred) ** 2).mean())
    rng = np.random.default_rng(0)
    noisy = np.clip(clean + rng.normal(0, level, clean.shape), 0, 1)

    print(f"{'candidate':<12} {'cpsnr':>8} {'ssim':>8}")
    for name, cand in (("identical", clean), ("noisy", noisy), ("blurred", blurred)):
        print(f"{name:<12} {cpsnr(clean, cand):>8.2f} {color_ssim(clean, cand):>8.4f}")
    print("noise and blur were tuned to equal mean squared error, so PSNR ties;"
          " the structural score prefers the noisy copy, which keeps the texture\n")

    gray = clean[1]
    print(f"{'sigma':>6} {'gray psnr':>10} {'ssim':>8}")
    for sigma in (2, 5, 10, 20, 40):
        noisy_gray = np.clip(gray + rng.normal(0, sigma / 255, gray.shape), 0, 1)
        print(f"{sigma:>6} {psnr(gray, noisy_gray):>10.2f} {ssim(gray, noisy_gray):>8.4f}")

    print("\na uniform one-step error on the 0-255 scale pins PSNR near "
          f"{psnr(np.zeros((8, 8)), np.full((8, 8), 1 / 255)):.2f} dB")


if __name__ == "__main__":
    main()
