#!/usr/bin/env python3
# Copyright 2026 The rlface Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Converts pretrained weights into the RLW1 named-tensor format read by rlface.

RLW1 layout (little endian):
  "RLW1" | u32 count | count x { u32 name_len | name | u32 ndim | i64 dims[ndim] | f32 data }

Supported sources:
  torch   a PyTorch state_dict (.pt); names are kept, conv weights are OIHW already.
  keras   a Keras .h5 weight file; `<layer>/kernel` becomes `<layer>.weight` (HWIO -> OIHW,
          dense (in,out) -> (out,in)) and `<layer>/bias` becomes `<layer>.bias`.
  mtcnn   the facenet-pytorch P/R/O-Net state dicts; dense layers that follow the
          (N, W, H, C) flatten are re-ordered to the channel-major flatten used by rlface.
"""
import argparse
import hashlib
import struct
import sys

import numpy as np


def write_rlw(path, tensors):
    with open(path, "wb") as f:
        f.write(b"RLW1")
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors:
            arr = np.ascontiguousarray(arr, dtype="<f4")
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<q", d))
            f.write(arr.tobytes())
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def load_torch(path):
    import torch
    sd = torch.load(path, map_location="cpu")
    return [(k, v.detach().numpy()) for k, v in sd.items() if v.dtype.is_floating_point]


# Dense layers whose input is the (W, H, C)-ordered flatten of a C x H x W map.
MTCNN_PERMUTED = {"dense4.weight": (64, 3, 3), "dense5.weight": (128, 3, 3)}


def load_mtcnn(path):
    out = []
    for name, arr in load_torch(path):
        if name in MTCNN_PERMUTED and arr.shape[1] == np.prod(MTCNN_PERMUTED[name]):
            c, h, w = MTCNN_PERMUTED[name]
            arr = arr.reshape(arr.shape[0], w, h, c).transpose(0, 3, 2, 1).reshape(arr.shape[0], -1)
        out.append((name, arr))
    return out


def load_keras(path):
    import h5py
    out = []
    with h5py.File(path, "r") as f:
        root = f["model_weights"] if "model_weights" in f else f

        def visit(name, obj):
            if not isinstance(obj, h5py.Dataset):
                return
            parts = name.split("/")
            layer, leaf = parts[0], parts[-1].split(":")[0]
            arr = np.array(obj)
            if leaf == "kernel":
                arr = arr.transpose(3, 2, 0, 1) if arr.ndim == 4 else arr.T
                out.append((layer + ".weight", arr))
            elif leaf == "bias":
                out.append((layer + ".bias", arr))
            elif leaf in ("gamma", "beta", "moving_mean", "moving_variance"):
                mapped = {"gamma": "weight", "beta": "bias", "moving_mean": "running_mean",
                          "moving_variance": "running_var"}[leaf]
                out.append((layer + "." + mapped, arr))

        root.visititems(visit)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("format", choices=["torch", "keras", "mtcnn"])
    ap.add_argument("source")
    ap.add_argument("dest")
    args = ap.parse_args()
    loader = {"torch": load_torch, "keras": load_keras, "mtcnn": load_mtcnn}[args.format]
    tensors = loader(args.source)
    digest = write_rlw(args.dest, tensors)
    print(f"{args.dest}: {len(tensors)} tensors sha256={digest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
