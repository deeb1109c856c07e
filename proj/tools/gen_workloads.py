#!/usr/bin/env python3
"""Writes the bundled workload descriptions to workloads/*.json.

Layer shapes follow the public architecture definitions, with "same"
padding throughout. Multi-head attention is modelled with heads merged
into one matmul per projection.

    python3 tools/gen_workloads.py [out_dir]
"""

import json
import math
import sys
from pathlib import Path


class Net:
    def __init__(self, name):
        self.name = name
        self.layers = []
        self.shapes = {}  # id -> output (C, H, W)

    def _add(self, lid, op, dims, preds, out):
        assert lid not in self.shapes, lid
        layer = {"id": lid, "op": op, "dims": dims}
        if preds:
            layer["preds"] = list(preds)
        self.layers.append(layer)
        self.shapes[lid] = out
        return lid

    def conv(self, lid, src, k, r, s=None, stride=1, groups=1, shape=None):
        s = r if s is None else s
        c, h, w = shape if src is None else self.shapes[src]
        out = (k, math.ceil(h / stride), math.ceil(w / stride))
        dims = {"C": c, "K": k, "R": r, "S": s, "H": h, "W": w}
        if stride != 1:
            dims["stride"] = stride
        if groups != 1:
            dims["groups"] = groups
        return self._add(lid, "Conv", dims, [src] if src else [], out)

    def pool(self, lid, src, window, stride):
        c, h, w = self.shapes[src]
        out = (c, math.ceil(h / stride), math.ceil(w / stride))
        dims = {"C": c, "H": h, "W": w, "window": window, "stride": stride}
        return self._add(lid, "Pool", dims, [src], out)

    def gpool(self, lid, src):
        _, h, _ = self.shapes[src]
        return self.pool(lid, src, h, h)

    def add(self, lid, a, b):
        c, h, w = self.shapes[a]
        assert self.shapes[b] == (c, h, w), (lid, self.shapes[a], self.shapes[b])
        return self._add(lid, "EltwiseAdd", {"C": c, "H": h, "W": w}, [a, b], (c, h, w))

    def concat(self, lid, srcs):
        _, h, w = self.shapes[srcs[0]]
        c = sum(self.shapes[p][0] for p in srcs)
        return self._add(lid, "Concat", {"C": c, "H": h, "W": w}, srcs, (c, h, w))

    def fc(self, lid, src, m, k=None, n=None):
        if src is not None:
            vol = math.prod(self.shapes[src])
            n = 1 if n is None else n
            k = vol // n if k is None else k
            assert k * n == vol, (lid, k, n, vol)
        return self._add(lid, "Fc", {"M": m, "K": k, "N": n or 1}, [src] if src else [], (m, n or 1, 1))

    def matmul(self, lid, src, operand, m, k, n):
        assert math.prod(self.shapes[src]) == k * n, lid
        assert math.prod(self.shapes[operand]) == m * k, lid
        return self._add(lid, "Matmul", {"M": m, "K": k, "N": n}, [src, operand], (m, n, 1))

    def lstm(self, lid, srcs, hidden, inp):
        return self._add(lid, "LstmCell", {"hidden": hidden, "input": inp}, srcs, (hidden, 1, 1))

    def embed(self, lid, vocab, dim, tokens):
        return self._add(lid, "Embedding", {"vocab": vocab, "dim": dim, "tokens": tokens}, [], (dim, tokens, 1))

    def doc(self):
        return {"name": self.name, "bytes_per_elem": 1, "layers": self.layers}


# --- residual families ------------------------------------------------------

def resnet(name, blocks, width=64, groups=1, mid_mult=1):
    n = Net(name)
    x = n.conv("conv1", None, 64, 7, stride=2, shape=(3, 224, 224))
    x = n.pool("pool1", x, 3, 2)
    for si, count in enumerate(blocks):
        mid = width * (2 ** si) * mid_mult
        out = width * (2 ** si) * 4
        for b in range(count):
            p = f"s{si + 1}b{b + 1}"
            stride = 2 if (b == 0 and si > 0) else 1
            y = n.conv(f"{p}_a", x, mid, 1)
            y = n.conv(f"{p}_b", y, mid, 3, stride=stride, groups=groups)
            y = n.conv(f"{p}_c", y, out, 1)
            short = n.conv(f"{p}_proj", x, out, 1, stride=stride) if b == 0 else x
            x = n.add(f"{p}_add", y, short)
    x = n.gpool("avgpool", x)
    n.fc("fc", x, 1000)
    return n


def darknet19():
    n = Net("darknet19")
    x = n.conv("conv1", None, 32, 3, shape=(3, 224, 224))
    x = n.pool("pool1", x, 2, 2)
    x = n.conv("conv2", x, 64, 3)
    x = n.pool("pool2", x, 2, 2)
    plan = [[(128, 3), (64, 1), (128, 3)],
            [(256, 3), (128, 1), (256, 3)],
            [(512, 3), (256, 1), (512, 3), (256, 1), (512, 3)],
            [(1024, 3), (512, 1), (1024, 3), (512, 1), (1024, 3)]]
    idx = 3
    for gi, group in enumerate(plan):
        for k, r in group:
            x = n.conv(f"conv{idx}", x, k, r)
            idx += 1
        if gi < len(plan) - 1:
            x = n.pool(f"pool{gi + 3}", x, 2, 2)
    x = n.conv(f"conv{idx}", x, 1000, 1)
    n.gpool("avgpool", x)
    return n


def densenet121():
    n = Net("densenet121")
    x = n.conv("conv0", None, 64, 7, stride=2, shape=(3, 224, 224))
    x = n.pool("pool0", x, 3, 2)
    for bi, units in enumerate([6, 12, 24, 16]):
        for u in range(units):
            p = f"b{bi + 1}u{u + 1}"
            y = n.conv(f"{p}_1x1", x, 128, 1)
            y = n.conv(f"{p}_3x3", y, 32, 3)
            x = n.concat(f"{p}_cat", [x, y])
        if bi < 3:
            x = n.conv(f"t{bi + 1}_conv", x, n.shapes[x][0] // 2, 1)
            x = n.pool(f"t{bi + 1}_pool", x, 2, 2)
    x = n.gpool("avgpool", x)
    n.fc("fc", x, 1000)
    return n


def googlenet():
    n = Net("googlenet")
    x = n.conv("conv1", None, 64, 7, stride=2, shape=(3, 224, 224))
    x = n.pool("pool1", x, 3, 2)
    x = n.conv("conv2_reduce", x, 64, 1)
    x = n.conv("conv2", x, 192, 3)
    x = n.pool("pool2", x, 3, 2)
    table = {
        "3a": (64, 96, 128, 16, 32, 32), "3b": (128, 128, 192, 32, 96, 64),
        "4a": (192, 96, 208, 16, 48, 64), "4b": (160, 112, 224, 24, 64, 64),
        "4c": (128, 128, 256, 24, 64, 64), "4d": (112, 144, 288, 32, 64, 64),
        "4e": (256, 160, 320, 32, 128, 128), "5a": (256, 160, 320, 32, 128, 128),
        "5b": (384, 192, 384, 48, 128, 128),
    }
    for name, (n1, n3r, n3, n5r, n5, pp) in table.items():
        p = f"inc{name}"
        b1 = n.conv(f"{p}_1x1", x, n1, 1)
        b2 = n.conv(f"{p}_3x3", n.conv(f"{p}_3x3r", x, n3r, 1), n3, 3)
        b3 = n.conv(f"{p}_5x5", n.conv(f"{p}_5x5r", x, n5r, 1), n5, 5)
        b4 = n.conv(f"{p}_pp", n.pool(f"{p}_pool", x, 3, 1), pp, 1)
        x = n.concat(f"{p}_cat", [b1, b2, b3, b4])
        if name in ("3b", "4e"):
            x = n.pool(f"pool_{name}", x, 3, 2)
    x = n.gpool("avgpool", x)
    n.fc("fc", x, 1000)
    return n


def inception_resnet_v2():
    n = Net("ires")
    x = n.conv("stem1", None, 32, 3, stride=2, shape=(3, 299, 299))
    x = n.conv("stem2", x, 32, 3)
    x = n.conv("stem3", x, 64, 3)
    x = n.pool("stem_pool1", x, 3, 2)
    x = n.conv("stem4", x, 80, 1)
    x = n.conv("stem5", x, 192, 3)
    x = n.pool("stem_pool2", x, 3, 2)
    # Mixed 5b
    b0 = n.conv("m5b_b0", x, 96, 1)
    b1 = n.conv("m5b_b1b", n.conv("m5b_b1a", x, 48, 1), 64, 5)
    b2 = n.conv("m5b_b2c", n.conv("m5b_b2b", n.conv("m5b_b2a", x, 64, 1), 96, 3), 96, 3)
    b3 = n.conv("m5b_b3", n.pool("m5b_pool", x, 3, 1), 64, 1)
    x = n.concat("m5b_cat", [b0, b1, b2, b3])
    for i in range(10):
        p = f"a{i + 1}"
        b0 = n.conv(f"{p}_b0", x, 32, 1)
        b1 = n.conv(f"{p}_b1b", n.conv(f"{p}_b1a", x, 32, 1), 32, 3)
        b2 = n.conv(f"{p}_b2c", n.conv(f"{p}_b2b", n.conv(f"{p}_b2a", x, 32, 1), 48, 3), 64, 3)
        up = n.conv(f"{p}_up", n.concat(f"{p}_cat", [b0, b1, b2]), n.shapes[x][0], 1)
        x = n.add(f"{p}_add", up, x)
    # Reduction A
    b0 = n.conv("ra_b0", x, 384, 3, stride=2)
    b1 = n.conv("ra_b1c", n.conv("ra_b1b", n.conv("ra_b1a", x, 256, 1), 256, 3), 384, 3, stride=2)
    b2 = n.pool("ra_pool", x, 3, 2)
    x = n.concat("ra_cat", [b0, b1, b2])
    for i in range(20):
        p = f"b{i + 1}"
        b0 = n.conv(f"{p}_b0", x, 192, 1)
        b1 = n.conv(f"{p}_b1c", n.conv(f"{p}_b1b", n.conv(f"{p}_b1a", x, 128, 1), 160, 1, 7), 192, 7, 1)
        up = n.conv(f"{p}_up", n.concat(f"{p}_cat", [b0, b1]), n.shapes[x][0], 1)
        x = n.add(f"{p}_add", up, x)
    # Reduction B
    b0 = n.conv("rb_b0b", n.conv("rb_b0a", x, 256, 1), 384, 3, stride=2)
    b1 = n.conv("rb_b1b", n.conv("rb_b1a", x, 256, 1), 288, 3, stride=2)
    b2 = n.conv("rb_b2c", n.conv("rb_b2b", n.conv("rb_b2a", x, 256, 1), 288, 3), 320, 3, stride=2)
    b3 = n.pool("rb_pool", x, 3, 2)
    x = n.concat("rb_cat", [b0, b1, b2, b3])
    for i in range(10):
        p = f"c{i + 1}"
        b0 = n.conv(f"{p}_b0", x, 192, 1)
        b1 = n.conv(f"{p}_b1c", n.conv(f"{p}_b1b", n.conv(f"{p}_b1a", x, 192, 1), 224, 1, 3), 256, 3, 1)
        up = n.conv(f"{p}_up", n.concat(f"{p}_cat", [b0, b1]), n.shapes[x][0], 1)
        x = n.add(f"{p}_add", up, x)
    x = n.conv("conv_final", x, 1536, 1)
    x = n.gpool("avgpool", x)
    n.fc("fc", x, 1000)
    return n


# --- attention and recurrent families ----------------------------------------

def attention(n, p, q_src, kv_src, d, seq):
    q = n.fc(f"{p}_q", q_src, d, d, seq)
    k = n.fc(f"{p}_k", kv_src, d, d, seq)
    v = n.fc(f"{p}_v", kv_src, d, d, seq)
    score = n.matmul(f"{p}_score", q, k, seq, d, seq)
    ctx = n.matmul(f"{p}_ctx", score, v, d, seq, seq)
    proj = n.fc(f"{p}_proj", ctx, d, d, seq)
    return n.add(f"{p}_res", proj, q_src)


def ffn(n, p, x, d, ff, seq):
    h = n.fc(f"{p}_ff1", x, ff, d, seq)
    o = n.fc(f"{p}_ff2", h, d, ff, seq)
    return n.add(f"{p}_ffres", o, x)


def transformer():
    d, ff, seq, vocab = 512, 2048, 64, 32000
    n = Net("transformer")
    x = n.embed("src_embed", vocab, d, seq)
    for i in range(6):
        x = ffn(n, f"enc{i + 1}", attention(n, f"enc{i + 1}_sa", x, x, d, seq), d, ff, seq)
    mem = x
    y = n.embed("tgt_embed", vocab, d, seq)
    for i in range(6):
        y = attention(n, f"dec{i + 1}_sa", y, y, d, seq)
        y = attention(n, f"dec{i + 1}_ca", y, mem, d, seq)
        y = ffn(n, f"dec{i + 1}", y, d, ff, seq)
    n.fc("generator", y, vocab, d, seq)
    return n


def tf_cell():
    d, ff, seq, vocab = 1024, 4096, 128, 32000
    n = Net("tf_cell")
    x = n.embed("embed", vocab, d, seq)
    x = attention(n, "sa", x, x, d, seq)
    ffn(n, "cell", x, d, ff, seq)
    return n


def gnmt(steps=4, depth=8, hidden=1024, vocab=32000):
    n = Net("gnmt")
    enc = [[None] * steps for _ in range(depth)]
    for t in range(steps):
        below = n.embed(f"src_embed_t{t}", vocab, hidden, 1)
        for l in range(depth):
            preds = [below] + ([enc[l][t - 1]] if t > 0 else [])
            enc[l][t] = n.lstm(f"enc{l}_t{t}", preds, hidden, hidden)
            below = enc[l][t]
    mem = n.concat("enc_out", [enc[depth - 1][t] for t in range(steps)])
    dec = [[None] * steps for _ in range(depth)]
    for t in range(steps):
        emb = n.embed(f"tgt_embed_t{t}", vocab, hidden, 1)
        dec[0][t] = n.lstm(f"dec0_t{t}", [emb] + ([dec[0][t - 1]] if t > 0 else []), hidden, hidden)
        score = n.matmul(f"attn_score_t{t}", dec[0][t], mem, steps, hidden, 1)
        below = n.matmul(f"attn_ctx_t{t}", score, mem, hidden, steps, 1)
        for l in range(1, depth):
            preds = [below] + ([dec[l][t - 1]] if t > 0 else [])
            dec[l][t] = n.lstm(f"dec{l}_t{t}", preds, hidden, hidden)
            below = dec[l][t]
        n.fc(f"softmax_t{t}", below, vocab)
    return n


def lstm_lm(steps=8, depth=2, hidden=650, vocab=10000):
    n = Net("lstm")
    cells = [[None] * steps for _ in range(depth)]
    for t in range(steps):
        below = n.embed(f"embed_t{t}", vocab, hidden, 1)
        for l in range(depth):
            preds = [below] + ([cells[l][t - 1]] if t > 0 else [])
            cells[l][t] = n.lstm(f"lstm{l}_t{t}", preds, hidden, hidden)
            below = cells[l][t]
        n.fc(f"decoder_t{t}", below, vocab)
    return n


# -----------------------------------------------------------------------------

def split_extents(layer):
    """Extents of the three partitioned dimensions (output channels, output
    rows, reduction)."""
    d, op = layer["dims"], layer["op"]
    if op == "Conv":
        return d["K"], math.ceil(d["H"] / d.get("stride", 1)), d["C"] if d.get("groups", 1) == 1 else 0
    if op == "Pool":
        return d["C"], math.ceil(d["H"] / d["stride"]), 0
    if op in ("EltwiseAdd", "Concat"):
        return d["C"], d.get("H", 1), 0
    if op in ("Fc", "Matmul"):
        return d["M"], d.get("N", 1), d["K"]
    if op == "LstmCell":
        return d["hidden"], 1, d["hidden"] + d["input"]
    if op == "Embedding":
        return d["dim"], d["tokens"], 0
    raise ValueError(op)


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "workloads"
    nets = [darknet19(), densenet121(), gnmt(), googlenet(), inception_resnet_v2(), lstm_lm(),
            resnet("resnet50", [3, 4, 6, 3]), resnet("resnet101", [3, 4, 23, 3]),
            resnet("resnet152", [3, 8, 36, 3]), resnet("resnext50", [3, 4, 6, 3], groups=32, mid_mult=2),
            tf_cell(), transformer()]
    out.mkdir(parents=True, exist_ok=True)
    for n in nets:
        for layer in n.layers:
            if max(split_extents(layer)) < 18:
                raise SystemExit(f"{n.name}/{layer['id']}: no dimension splits 18 ways")
        text = json.dumps(n.doc(), indent=1, sort_keys=False) + "\n"
        (out / f"{n.name}.json").write_text(text)
        print(f"{n.name}: {len(n.layers)} layers")


if __name__ == "__main__":
    main()
