"""Regenerate the shipped architecture description files.

    python tools/make_architectures.py src/framegrind/data/architectures
"""

import json
import os
import sys


def conv(k, stride, cin, cout, **extra):
    return dict(kind="Conv", k=k, stride=stride, **{"in": cin, "out": cout}, **extra)


def dw(stride, c):
    return {"kind": "DepthwiseConv", "k": 3, "stride": stride, "in": c, "out": c}


def mobilenet_v1():
    layers = [conv(3, 2, 3, 32)]
    body = [(32, 64, 1), (64, 128, 2), (128, 128, 1), (128, 256, 2), (256, 256, 1),
            (256, 512, 2)] + [(512, 512, 1)] * 5 + [(512, 1024, 2), (1024, 1024, 1)]
    for cin, cout, s in body:
        layers += [dw(s, cin), conv(1, 1, cin, cout)]
    layers.append({"kind": "GlobalPool"})
    return {"name": "MobileNet", "base_input": 224, "width_multiplier": True,
            "layers": layers, "head": {"in": 1024}}


def vgg16():
    layers, cin = [], 3
    for cout, reps in ((64, 2), (128, 2), (256, 3), (512, 3), (512, 3)):
        for _ in range(reps):
            layers.append(conv(3, 1, cin, cout))
            cin = cout
        layers.append({"kind": "Pool", "k": 2, "stride": 2})
    layers += [{"kind": "Dense", "out": 4096}, {"kind": "Dense", "in": 4096, "out": 4096}]
    return {"name": "VGG-16", "base_input": 224, "width_multiplier": False,
            "layers": layers, "head": {"in": 4096}}


def resnet50():
    # original v1 bottleneck: the stride sits on the first 1x1 convolution
    layers = [conv(7, 2, 3, 64), {"kind": "Pool", "k": 3, "stride": 2}]
    cin, spatial = 64, 56
    for mid, cout, blocks, stride in ((64, 256, 3, 1), (128, 512, 4, 2), (256, 1024, 6, 2),
                                      (512, 2048, 3, 2)):
        for b in range(blocks):
            s = stride if b == 0 else 1
            layers += [conv(1, s, cin, mid), conv(3, 1, mid, mid), conv(1, 1, mid, cout)]
            if b == 0:
                layers.append(conv(1, s, cin, cout, input=spatial))
                spatial = -(-spatial // s)
            layers.append({"kind": "Add"})
            cin = cout
    layers.append({"kind": "GlobalPool"})
    return {"name": "ResNet-50", "base_input": 224, "width_multiplier": False,
            "layers": layers, "head": {"in": 2048}}


def main(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for fname, arch in (("mobilenet_v1.json", mobilenet_v1()), ("vgg16.json", vgg16()),
                        ("resnet50.json", resnet50())):
        with open(os.path.join(out_dir, fname), "w") as fh:
            fh.write(dumps(arch))


def dumps(arch):
    """JSON with one layer per line."""
    head = {k: v for k, v in arch.items() if k not in ("layers", "head")}
    lines = ["{"]
    lines += [f" {json.dumps(k)}: {json.dumps(v)}," for k, v in head.items()]
    lines.append(' "layers": [')
    lines += [f"  {json.dumps(layer)}," for layer in arch["layers"]]
    lines[-1] = lines[-1].rstrip(",")
    lines.append(" ],")
    lines.append(f' "head": {json.dumps(arch["head"])}')
    lines.append("}")
    return "\n".join(lines) + "\n"


if __name__ == "__main__":
    main(sys.argv[1])
