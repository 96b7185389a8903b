#!/usr/bin/env python3
"""Write the VGG16 conv1_1..conv3_3 weights as the float32 blob read by the
vgg16 perceptual extractor.

Layout: 8-byte magic "SMDRVGG1", then for each of the seven convs its weight
(out, in, 3, 3) followed by its bias (out), little-endian float32.
"""

import argparse
import os
import sys

import numpy as np


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    default = os.path.join(os.environ.get("SMDRIS_CACHE", "."), "vgg16_features.bin")
    parser.add_argument("--out", default=default)
    args = parser.parse_args()

    import torchvision

    model = torchvision.models.vgg16(weights=torchvision.models.VGG16_Weights.IMAGENET1K_V1)
    convs = [m for m in model.features if m.__class__.__name__ == "Conv2d"][:7]
    with open(args.out, "wb") as f:
        f.write(b"SMDRVGG1")
        for conv in convs:
            f.write(conv.weight.detach().numpy().astype("<f4").tobytes())
            f.write(conv.bias.detach().numpy().astype("<f4").tobytes())
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
