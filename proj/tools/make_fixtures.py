#!/usr/bin/env python3
"""Generate the in-repo fixture set: SA-1B-style scenes with run-length mask
annotations, plus procedural style images.

Layout written under --out (default tests/fixtures):
  dataset/fx_NNN.png   content image
  dataset/fx_NNN.json  {"image": {...}, "annotations": [{"id", "area", "bbox", "segmentation": {"size", "counts"}}]}
  styles/<name>.png    style images
  masks/fx_000_{a,b}.png  the two largest fx_000 annotations as 8-bit masks

Output is a pure function of --seed; rerunning reproduces identical bytes.
"""

import argparse
import json
from pathlib import Path

import numpy as np
from PIL import Image


def rle_counts(mask: np.ndarray) -> list:
    """Column-major run lengths, first run counting zeros."""
    flat = mask.astype(bool).flatten(order="F")
    counts, current, run = [], False, 0
    for v in flat:
        if v != current:
            counts.append(run)
            run, current = 0, v
        run += 1
    counts.append(run)
    return counts


def rle_string(counts: list) -> str:
    """Compressed COCO string of a run list."""
    out = []
    for i, x in enumerate(counts):
        if i > 2:
            x -= counts[i - 2]
        more = True
        while more:
            c = x & 0x1F
            x >>= 5
            more = (x != -1) if (c & 0x10) else (x != 0)
            if more:
                c |= 0x20
            out.append(chr(c + 48))
    return "".join(out)


def bbox(mask: np.ndarray) -> list:
    ys, xs = np.nonzero(mask)
    return [int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1)]


def texture(rng, h, w, base, amp):
    """Smooth noise around a base colour."""
    coarse = rng.normal(0.0, 1.0, size=(h // 8 + 2, w // 8 + 2, 3))
    img = np.array(Image.fromarray(((coarse * 0.2 + 0.5).clip(0, 1) * 255).astype(np.uint8)).resize((w, h), Image.BICUBIC))
    noise = img.astype(np.float64) / 255.0 - 0.5
    return np.clip(np.asarray(base)[None, None, :] + amp * noise, 0.0, 1.0)


def shape_mask(rng, h, w, kind):
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = rng.uniform(0.25 * h, 0.75 * h), rng.uniform(0.2 * w, 0.8 * w)
    if kind == "ellipse":
        ry, rx = rng.uniform(0.12, 0.3) * h, rng.uniform(0.1, 0.3) * w
        th = rng.uniform(0, np.pi)
        dy, dx = yy - cy, xx - cx
        u = dx * np.cos(th) + dy * np.sin(th)
        v = -dx * np.sin(th) + dy * np.cos(th)
        return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
    if kind == "rect":
        hh, hw = rng.uniform(0.1, 0.25) * h, rng.uniform(0.1, 0.25) * w
        return (np.abs(yy - cy) <= hh) & (np.abs(xx - cx) <= hw)
    # star-ish blob: radius modulated by angle
    r0 = rng.uniform(0.15, 0.28) * min(h, w)
    k = rng.integers(3, 7)
    ang = np.arctan2(yy - cy, xx - cx)
    r = r0 * (1.0 + 0.3 * np.sin(k * ang + rng.uniform(0, 6.28)))
    return np.hypot(yy - cy, xx - cx) <= r


def scene(rng, h, w):
    sky = rng.uniform(0.3, 0.9, size=3)
    ground = rng.uniform(0.1, 0.6, size=3)
    horizon = int(rng.uniform(0.4, 0.7) * h)
    img = np.empty((h, w, 3))
    t = np.linspace(0, 1, horizon)[:, None, None]
    img[:horizon] = sky * (1 - 0.4 * t) + 0.1 * t
    img[horizon:] = texture(rng, h - horizon, w, ground, 0.35)
    masks = [np.zeros((h, w), bool)]
    masks[0][horizon:] = True  # ground region
    for _ in range(rng.integers(2, 5)):
        m = shape_mask(rng, h, w, rng.choice(["ellipse", "rect", "blob"]))
        if m.sum() == 0:
            continue
        colour = rng.uniform(0.05, 0.95, size=3)
        tex = texture(rng, h, w, colour, rng.uniform(0.1, 0.5))
        img[m] = tex[m]
        for prev in masks:
            prev &= ~m  # later objects occlude earlier ones
        masks.append(m)
    # one small annotation below the 2% floor
    small = np.zeros((h, w), bool)
    sy, sx = rng.integers(2, h - 6), rng.integers(2, w - 6)
    small[sy:sy + 4, sx:sx + 4] = True
    masks.append(small)
    return img, [m for m in masks if m.any()]


def style_image(rng, name, n):
    yy, xx = np.mgrid[0:n, 0:n] / n
    c1, c2, c3 = (rng.uniform(0, 1, size=3) for _ in range(3))
    if name == "stripes":
        t = 0.5 + 0.5 * np.sin(2 * np.pi * 9 * (xx + 0.4 * yy))
    elif name == "checker":
        t = ((np.floor(xx * 8) + np.floor(yy * 8)) % 2).astype(float)
    elif name == "waves":
        t = 0.5 + 0.5 * np.sin(2 * np.pi * (6 * yy + 0.8 * np.sin(2 * np.pi * 3 * xx)))
    elif name == "rings":
        t = 0.5 + 0.5 * np.cos(2 * np.pi * 10 * np.hypot(xx - 0.5, yy - 0.5))
    elif name == "mosaic":
        cells = rng.uniform(0, 1, size=(12, 12))
        t = cells[(yy * 12).astype(int).clip(0, 11), (xx * 12).astype(int).clip(0, 11)]
    else:  # strokes
        t = np.zeros((n, n))
        for _ in range(60):
            y0, x0 = rng.uniform(0, n, size=2)
            ang, length = rng.uniform(0, np.pi), rng.uniform(8, 30)
            for s in np.linspace(0, 1, 40):
                y, x = int(y0 + s * length * np.sin(ang)) % n, int(x0 + s * length * np.cos(ang)) % n
                t[max(0, y - 1):y + 2, max(0, x - 1):x + 2] = rng.uniform(0.3, 1.0)
    t = t[:, :, None]
    img = c1 * t + c2 * (1 - t) + 0.15 * (c3 - 0.5) * np.sin(2 * np.pi * 2 * yy)[:, :, None]
    return np.clip(img, 0, 1)


def save_png(path: Path, img: np.ndarray):
    Image.fromarray(np.round(img * 255).astype(np.uint8), "RGB").save(path, optimize=False)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "tests" / "fixtures")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--count", type=int, default=24)
    ap.add_argument("--height", type=int, default=128)
    ap.add_argument("--width", type=int, default=160)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    data_dir, style_dir = args.out / "dataset", args.out / "styles"
    data_dir.mkdir(parents=True, exist_ok=True)
    style_dir.mkdir(parents=True, exist_ok=True)

    mask_dir = args.out / "masks"
    mask_dir.mkdir(parents=True, exist_ok=True)

    ann_id = 1
    for i in range(args.count):
        stem = f"fx_{i:03d}"
        img, masks = scene(rng, args.height, args.width)
        save_png(data_dir / f"{stem}.png", img)
        anns = []
        for m in masks:
            counts = rle_counts(m)
            anns.append({
                "id": ann_id,
                "area": int(m.sum()),
                "bbox": bbox(m),
                "segmentation": {"size": [args.height, args.width], "counts": rle_string(counts)},
            })
            ann_id += 1
        doc = {"image": {"image_id": i, "file_name": f"{stem}.png", "height": args.height, "width": args.width},
               "annotations": anns}
        (data_dir / f"{stem}.json").write_text(json.dumps(doc, indent=1) + "\n")
        if i == 0:
            largest = sorted(masks, key=lambda m: -int(m.sum()))[:2]
            for tag, m in zip("ab", largest):
                Image.fromarray(m.astype(np.uint8) * 255, "L").save(mask_dir / f"{stem}_{tag}.png", optimize=False)

    for name in ["stripes", "checker", "waves", "rings", "mosaic", "strokes"]:
        save_png(style_dir / f"{name}.png", style_image(rng, name, 128))


if __name__ == "__main__":
    main()
