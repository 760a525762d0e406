#!/usr/bin/env python3
"""Convert the published relu3_1 linear style-transfer weights to a pcstyle checkpoint.

Inputs are the three PyTorch state dicts distributed with the original code:
the encoder (vgg_r31.pth), the decoder (dec_r31.pth) and the transform module
(r31.pth). The output is a single PCSTCKP1 container whose array names and
shapes must match data/r31_manifest.json.

Container layout:
    8 bytes   magic "PCSTCKP1"
    8 bytes   header length in bytes, unsigned little endian
    header    UTF-8 JSON {format, version, metadata, arrays[{name, shape, dtype, offset, count}]}
    payload   float32 little endian; offsets are bytes from the payload start
"""

import argparse
import json
import pathlib
import struct
import sys

import numpy as np

MAGIC = b"PCSTCKP1"
MANIFEST = pathlib.Path(__file__).resolve().parent.parent / "data" / "r31_manifest.json"
PREFIXES = ("encoder", "decoder", "transform")


def load_state_dict(path):
    import torch

    state = torch.load(path, map_location="cpu", weights_only=True)
    if isinstance(state, dict) and "state_dict" in state:
        state = state["state_dict"]
    out = {}
    for key, value in state.items():
        # Checkpoints saved from nn.DataParallel carry a "module." prefix.
        if key.startswith("module."):
            key = key[len("module."):]
        out[key] = value.detach().cpu().numpy()
    return out


def load_manifest(path=MANIFEST):
    with open(path, encoding="utf-8") as f:
        manifest = json.load(f)
    return [(a["name"], tuple(a["shape"])) for a in manifest["arrays"]]


def collect_arrays(encoder, decoder, transform, manifest):
    """Prefixes each state-dict key with its module name and checks it against the manifest."""
    named = {}
    for prefix, state in zip(PREFIXES, (encoder, decoder, transform)):
        for key, value in state.items():
            named[f"{prefix}.{key}"] = value
    expected = dict(manifest)
    missing = [n for n, _ in manifest if n not in named]
    unexpected = sorted(n for n in named if n not in expected)
    if missing or unexpected:
        raise ValueError(f"state dicts do not match the manifest; missing {missing}, unexpected {unexpected}")
    arrays = []
    for name, shape in manifest:
        value = np.asarray(named[name], dtype=np.float32)
        if value.shape != shape:
            raise ValueError(f"{name}: shape {value.shape}, manifest expects {shape}")
        if not np.all(np.isfinite(value)):
            raise ValueError(f"{name}: non-finite values")
        arrays.append((name, value))
    return arrays


def write_container(path, arrays, metadata):
    table = []
    offset = 0
    for name, value in arrays:
        table.append({"name": name, "shape": list(value.shape), "dtype": "float32",
                      "offset": offset, "count": int(value.size)})
        offset += value.size * 4
    header = json.dumps({"format": "pcstyle-checkpoint", "version": 1, "metadata": metadata,
                         "arrays": table}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for _, value in arrays:
            f.write(np.ascontiguousarray(value, dtype="<f4").tobytes())


def convert(encoder, decoder, transform, out, source="", style_loss_scale=1.0, manifest=MANIFEST):
    arrays = collect_arrays(load_state_dict(encoder), load_state_dict(decoder), load_state_dict(transform),
                            load_manifest(manifest))
    metadata = {
        "architecture": "linear-r31",
        "source": source,
        # The published weights take RGB in [0,1] without normalization.
        "input_mean": [0.0, 0.0, 0.0],
        "input_scale": [1.0, 1.0, 1.0],
        "style_loss_scale": float(style_loss_scale),
    }
    write_container(out, arrays, metadata)
    return len(arrays)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--encoder", required=True, help="vgg_r31.pth")
    parser.add_argument("--decoder", required=True, help="dec_r31.pth")
    parser.add_argument("--transform", required=True, help="r31.pth")
    parser.add_argument("--out", required=True, help="output .ckpt path")
    parser.add_argument("--source", default="", help="free-form provenance string stored in the metadata")
    parser.add_argument("--style-loss-scale", type=float, default=1.0,
                        help="multiplier for the summed Gram distances of the style loss")
    parser.add_argument("--manifest", default=str(MANIFEST))
    args = parser.parse_args(argv)
    try:
        n = convert(args.encoder, args.decoder, args.transform, args.out, args.source, args.style_loss_scale,
                    args.manifest)
    except (OSError, ValueError) as e:
        print(f"convert_checkpoint: {e}", file=sys.stderr)
        return 1
    print(f"wrote {n} arrays to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
