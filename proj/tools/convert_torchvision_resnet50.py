#!/usr/bin/env python3
"""Convert a torchvision ResNet-50 state dict into a sodkit tensor archive.

The archive holds every backbone tensor under the "encoder." prefix, which is
what `model.encoder = resnet50-pretrained` expects in `model.weights`.

    python3 tools/convert_torchvision_resnet50.py --out resnet50.sodarc
    python3 tools/convert_torchvision_resnet50.py --state-dict r50.pth --out resnet50.sodarc

With --fixture the script instead builds a seeded random ResNet-50 and writes
both its weights and reference side outputs for a random input, so the C++
encoder can be checked against torchvision without downloading anything.
"""

import argparse
import struct
import sys

MAGIC = b"SODARC01"


def _str(s):
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def write_archive(path, tensors, metadata=()):
    """tensors: iterable of (name, float32 numpy array of rank <= 4)."""
    import numpy as np

    with open(path, "wb") as f:
        f.write(MAGIC)
        metadata = list(metadata)
        f.write(struct.pack("<I", len(metadata)))
        for k, v in metadata:
            f.write(_str(k) + _str(v))
        tensors = list(tensors)
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors:
            arr = np.ascontiguousarray(arr, dtype="<f4")
            shape = list(arr.shape)
            if len(shape) == 1:  # per-channel vectors are stored as (C,1,1,1)
                shape = shape + [1, 1, 1]
            while len(shape) < 4:
                shape = [1] + shape
            f.write(_str(name) + struct.pack("<4i", *shape))
            f.write(arr.tobytes())


def backbone_tensors(state_dict):
    out = []
    for name, t in state_dict.items():
        if name.startswith("fc.") or name.endswith("num_batches_tracked"):
            continue
        out.append(("encoder." + name, t.detach().float().cpu().numpy()))
    return out


def make_fixture(path, seed, size):
    import torch
    import torchvision

    torch.manual_seed(seed)
    net = torchvision.models.resnet50(weights=None)
    # Non-trivial normalization statistics so eval-mode BN is exercised.
    for m in net.modules():
        if isinstance(m, torch.nn.BatchNorm2d):
            m.running_mean.uniform_(-0.2, 0.2)
            m.running_var.uniform_(0.5, 1.5)
            m.weight.data.uniform_(0.5, 1.5)
            m.bias.data.uniform_(-0.2, 0.2)
    net.eval()
    x = torch.randn(1, 3, size, size)
    with torch.no_grad():
        y = net.maxpool(net.relu(net.bn1(net.conv1(x))))
        sides = []
        for layer in (net.layer1, net.layer2, net.layer3, net.layer4):
            y = layer(y)
            sides.append(y)
    tensors = backbone_tensors(net.state_dict())
    tensors.append(("input", x.numpy()))
    for i, s in enumerate(sides):
        tensors.append(("side%d" % (i + 2), s.numpy()))
    write_archive(path, tensors, [("source", "torchvision-random"), ("seed", str(seed))])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", required=True, help="archive to write")
    ap.add_argument("--state-dict", help="torchvision ResNet-50 state dict (.pth); default downloads ImageNet weights")
    ap.add_argument("--fixture", action="store_true", help="write a random-weight parity fixture instead")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=int, default=64)
    args = ap.parse_args(argv)

    if args.fixture:
        try:
            import torch  # noqa: F401
            import torchvision  # noqa: F401
        except ImportError as e:
            print("skipping fixture: %s" % e, file=sys.stderr)
            return 77
        make_fixture(args.out, args.seed, args.size)
        return 0

    import torch
    import torchvision

    if args.state_dict:
        state = torch.load(args.state_dict, map_location="cpu")
        source = args.state_dict
    else:
        weights = torchvision.models.ResNet50_Weights.IMAGENET1K_V1
        state = torchvision.models.resnet50(weights=weights).state_dict()
        source = str(weights)
    write_archive(args.out, backbone_tensors(state), [("source", source)])
    return 0


if __name__ == "__main__":
    sys.exit(main())
