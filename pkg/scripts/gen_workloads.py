"""Regenerate the bundled workload documents under src/dlsim/workloads/.

Layer dimensions follow the public architecture definitions named in each
document's ``provenance`` field. ReLU is folded into the preceding conv/fc
(in-place, as in Caffe); pooling, LRN and residual additions are explicit
weight-free layers.

    python scripts/gen_workloads.py
"""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "dlsim" / "workloads"


class Builder:
    def __init__(self):
        self.layers = []

    def add(self, kind, name, preds, **dims):
        lid = len(self.layers)
        entry = {"id": lid, "name": name, "kind": kind}
        entry.update(dims)
        entry["predecessors"] = list(preds)
        self.layers.append(entry)
        return lid

    def conv(self, name, preds, c, k, r, p, h=None):
        dims = dict(C=c, K=k, R=r, S=r, P=p, Q=p)
        if h is not None and h != p:
            dims.update(H=h, W=h)
        return self.add("conv", name, preds, **dims)

    def pool(self, name, preds, c, p, h):
        return self.add("pooling", name, preds, C=c, P=p, Q=p, H=h, W=h)

    def norm(self, name, preds, c, p):
        return self.add("normalization", name, preds, C=c, P=p, Q=p)

    def act(self, name, preds, c, p):
        return self.add("activation", name, preds, C=c, P=p, Q=p)

    def fc(self, name, preds, i, o):
        return self.add("fc", name, preds, I=i, O=o)


def alexnet():
    b = Builder()
    x = b.conv("conv1", [], 3, 96, 11, 55, h=227)
    x = b.norm("norm1", [x], 96, 55)
    x = b.pool("pool1", [x], 96, 27, 55)
    x = b.conv("conv2", [x], 96, 256, 5, 27)
    x = b.norm("norm2", [x], 256, 27)
    x = b.pool("pool2", [x], 256, 13, 27)
    x = b.conv("conv3", [x], 256, 384, 3, 13)
    x = b.conv("conv4", [x], 384, 384, 3, 13)
    x = b.conv("conv5", [x], 384, 256, 3, 13)
    x = b.pool("pool5", [x], 256, 6, 13)
    x = b.fc("fc6", [x], 9216, 4096)
    x = b.fc("fc7", [x], 4096, 4096)
    b.fc("fc8", [x], 4096, 1000)
    return b.layers, "Krizhevsky et al. 2012 (single-tower Caffe bvlc_alexnet, 227x227 input)"


def vgg_e():
    b = Builder()
    x, c, size = None, 3, 224
    for block, (k, n) in enumerate([(64, 2), (128, 2), (256, 4), (512, 4), (512, 4)], start=1):
        for i in range(1, n + 1):
            x = b.conv(f"conv{block}_{i}", [] if x is None else [x], c, k, 3, size)
            c = k
        x = b.pool(f"pool{block}", [x], c, size // 2, size)
        size //= 2
    x = b.fc("fc6", [x], 512 * 7 * 7, 4096)
    x = b.fc("fc7", [x], 4096, 4096)
    b.fc("fc8", [x], 4096, 1000)
    return b.layers, "Simonyan & Zisserman 2014, configuration E (VGG-19), 224x224 input"


def resnet34():
    b = Builder()
    x = b.conv("conv1", [], 3, 64, 7, 112, h=224)
    x = b.pool("pool1", [x], 64, 56, 112)
    c, size = 64, 56
    for stage, (k, blocks) in enumerate([(64, 3), (128, 4), (256, 6), (512, 3)], start=2):
        for i in range(1, blocks + 1):
            stride = 2 if (i == 1 and stage > 2) else 1
            out = size // stride
            a = b.conv(f"conv{stage}_{i}a", [x], c, k, 3, out, h=size)
            r = b.conv(f"conv{stage}_{i}b", [a], k, k, 3, out)
            x = b.act(f"add{stage}_{i}", [r, x], k, out)
            c, size = k, out
    x = b.pool("avgpool", [x], 512, 1, 7)
    b.fc("fc", [x], 512, 1000)
    return b.layers, "He et al. 2015, 34-layer plain-shortcut ResNet (option A identity shortcuts), 224x224 input"


def googlenet():
    b = Builder()
    x = b.conv("conv1", [], 3, 64, 7, 112, h=224)
    x = b.pool("pool1", [x], 64, 56, 112)
    x = b.norm("norm1", [x], 64, 56)
    x = b.conv("conv2_reduce", [x], 64, 64, 1, 56)
    x = b.conv("conv2", [x], 64, 192, 3, 56)
    x = b.norm("norm2", [x], 192, 56)
    inputs = [b.pool("pool2", [x], 192, 28, 56)]
    c, size = 192, 28
    modules = [
        ("3a", 64, 96, 128, 16, 32, 32),
        ("3b", 128, 128, 192, 32, 96, 64),
        "pool3",
        ("4a", 192, 96, 208, 16, 48, 64),
        ("4b", 160, 112, 224, 24, 64, 64),
        ("4c", 128, 128, 256, 24, 64, 64),
        ("4d", 112, 144, 288, 32, 64, 64),
        ("4e", 256, 160, 320, 32, 128, 128),
        "pool4",
        ("5a", 256, 160, 320, 32, 128, 128),
        ("5b", 384, 192, 384, 48, 128, 128),
    ]
    for m in modules:
        if isinstance(m, str):
            inputs = [b.pool(m, inputs, c, size // 2, size)]
            size //= 2
            continue
        tag, n1, n3r, n3, n5r, n5, proj = m
        b1 = b.conv(f"inc{tag}_1x1", inputs, c, n1, 1, size)
        r3 = b.conv(f"inc{tag}_3x3r", inputs, c, n3r, 1, size)
        b3 = b.conv(f"inc{tag}_3x3", [r3], n3r, n3, 3, size)
        r5 = b.conv(f"inc{tag}_5x5r", inputs, c, n5r, 1, size)
        b5 = b.conv(f"inc{tag}_5x5", [r5], n5r, n5, 5, size)
        bp = b.pool(f"inc{tag}_pool", inputs, c, size, size)
        pp = b.conv(f"inc{tag}_proj", [bp], c, proj, 1, size)
        inputs = [b1, b3, b5, pp]
        c = n1 + n3 + n5 + proj
    x = b.pool("avgpool", inputs, c, 1, size)
    b.fc("fc", [x], c, 1000)
    return b.layers, "Szegedy et al. 2014 (GoogLeNet / Inception v1, no auxiliary classifiers), 224x224 input"


def rnn(kind, hidden, layers, classes):
    b = Builder()
    x = None
    for i in range(layers):
        x = b.add(kind, f"{kind}{i}", [] if x is None else [x], I=hidden, O=hidden)
    b.fc("classifier", [x], hidden, classes)
    return b.layers


WORKLOADS = {
    "alexnet": (alexnet, 1),
    "googlenet": (googlenet, 1),
    "vgg_e": (vgg_e, 1),
    "resnet": (resnet34, 1),
    "rnn_gemv": (
        lambda: (
            rnn("recurrent-gemv", 1760, 2, 29),
            "Baidu DeepBench vanilla RNN (speech), hidden 1760, 2 stacked layers",
        ),
        50,
    ),
    "rnn_lstm_1": (
        lambda: (
            rnn("lstm-cell", 1024, 2, 1000),
            "Baidu DeepBench LSTM (machine translation), hidden 1024, 2 stacked layers",
        ),
        25,
    ),
    "rnn_lstm_2": (
        lambda: (
            rnn("lstm-cell", 2048, 2, 1000),
            "Baidu DeepBench LSTM (language modeling), hidden 2048, 2 stacked layers",
        ),
        25,
    ),
    "rnn_gru": (
        lambda: (rnn("gru-cell", 2816, 2, 29), "Baidu DeepBench GRU (speech), hidden 2816, 2 stacked layers"),
        187,
    ),
}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, (build, steps) in WORKLOADS.items():
        layers, provenance = build()
        doc = {
            "name": name,
            "provenance": provenance,
            "elementBytes": 4,
            "timesteps": steps,
            "layers": layers,
        }
        (OUT / f"{name}.json").write_text(json.dumps(doc, indent=1) + "\n")
        print(f"{name}: {len(layers)} layers")


if __name__ == "__main__":
    main()
