"""Hide DCT sign bits of a test picture and compare every recovery method.

Run:  python3 demos/compare_methods.py [--image camera] [--u 3] [--size 64]

Needs scikit-image for the sample picture (``pip install scikit-image``).
"""

import argparse
import time

import numpy as np
import skimage.data
from skimage.color import rgb2gray

from dctsign import CodingConfig, PixelImage, RecoveryConfig, encode_image, mask_signs, recover
from dctsign.codecmodel import observed
from dctsign.metrics import psnr, ssim


def grayscale_crop(name, size):
    img = getattr(skimage.data, name)()
    if img.ndim == 3:
        img = np.round(rgb2gray(img[..., :3]) * 255)
    top, left = (img.shape[0] - size) // 2, (img.shape[1] - size) // 2
    return img[top:top + size, left:left + size].astype(float)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--image", default="camera")
    ap.add_argument("--u", type=int, default=3, help="signs hidden per block")
    ap.add_argument("--size", type=int, default=64, help="crop side, a multiple of 32")
    args = ap.parse_args()

    x = grayscale_crop(args.image, args.size)
    cfg = CodingConfig(level_shift=True)
    coeffs, chain = encode_image(PixelImage(x), cfg)
    mask = mask_signs(coeffs, args.u, cfg, chain)
    # what a receiver sees: hidden signs stripped, truth discarded
    obs, obs_chain = observed(coeffs, mask, chain)
    blind = mask.without_truth()
    print(f"{args.image} {args.size}x{args.size}, {len(mask)} hidden signs")

    for method in ("naive-neg", "naive-pos", "naive-lp", "relaxed-lp", "hier-milp"):
        start = time.perf_counter()
        res = recover(obs, blind, obs_chain, cfg, RecoveryConfig(method))
        # naive-lp keeps relaxed real values, so it has no signs to count
        wrong = "-" if method == "naive-lp" else sum(
            1 for key, u in mask if res.choices.get(key) != u.truth)
        print(f"  {method:<11} PSNR {psnr(x, res.image):6.2f} dB  SSIM {ssim(x, res.image):.4f}"
              f"  wrong signs {wrong:>4}  {time.perf_counter() - start:5.1f}s")


if __name__ == "__main__":
    main()
