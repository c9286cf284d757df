#!/usr/bin/env python3
"""Independent reference values for the C++ tests.

Everything here is recomputed from the written formulas with the Python
standard library only; the outputs are committed and the C++ tests read them.
Run from the repository root: python3 tests/oracles/generate_oracles.py
"""

import hashlib
import json
import math
import os
import struct

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "fixtures")
GOLDEN = os.path.join(ROOT, "golden")
MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def below(self, n):
        return self.next() % n

    def unit(self):
        return (self.next() >> 11) * 2.0 ** -53

    def shuffle(self, items):
        for i in range(len(items), 1, -1):
            j = self.below(i)
            items[i - 1], items[j] = items[j], items[i - 1]


def f32(x):
    return struct.unpack("<f", struct.pack("<f", x))[0]


def hash_embedding(data, dim):
    out = []
    for c in range(dim):
        d = hashlib.sha256(data + struct.pack("<Q", c)).digest()
        x = struct.unpack("<Q", d[:8])[0]
        out.append(f32(2.0 * ((x >> 11) * 2.0 ** -53) - 1.0))
    return out


def clustered_embedding(k, data, dim):
    jitter = hash_embedding(data, dim)
    scale = 0.01 / math.sqrt(dim)
    return [f32((1.0 if c == k else 0.0) + scale * jitter[c]) for c in range(dim)]


def prompt_sha256(parts):
    h = hashlib.sha256()
    h.update(struct.pack("<Q", len(parts)))
    for kind, value in parts:
        if kind == "text":
            b = value.encode()
            h.update(b"T" + struct.pack("<Q", len(b)) + b)
        else:
            h.update(b"I" + hashlib.sha256(value).hexdigest().encode())
    return h.hexdigest()


def merge(parts):
    out = []
    for kind, value in parts:
        if kind == "text" and out and out[-1][0] == "text":
            out[-1] = ("text", out[-1][1] + value)
        elif kind == "text" and value == "":
            continue
        else:
            out.append((kind, value))
    return out


def display(parts):
    s = ""
    for kind, value in parts:
        s += value if kind == "text" else "<image sha256=%s>" % hashlib.sha256(value).hexdigest()[:12]
    return s


INSTRUCTION = {
    "emotion": "Question: Do you feel which emotion when seeing this image? "
    "There is an emotion category list: [%s].",
    "object": "Question: What you see in this image? There is a category list: [%s].",
}
LABELS = {"emotion": ["happy", "sad", "angry"], "object": ["cat", "dog", "bird"]}
QUERY = b"query-image"
DEMOS = [
    {"id": "d1", "image": b"demo-image-1", "summary": "A smiling child blows out birthday candles"},
    {"id": "d2", "image": b"demo-image-2", "summary": "A lone figure waits at a rainy bus stop"},
]


def render(kind, mode, demos_answers):
    parts = [("text", INSTRUCTION[kind] % ", ".join(LABELS[kind]))]
    if mode == "zero_shot":
        parts += [("text", " Image: "), ("image", QUERY), ("text", ". Answer: ")]
        return merge(parts)
    parts.append(("text", " "))
    for i, (demo, answer) in enumerate(zip(DEMOS, demos_answers), start=1):
        parts.append(("text", "Image %d: " % i))
        parts.append(("image", demo["image"]) if mode == "icl" else ("text", demo["summary"]))
        parts.append(("text", ". Answer: %s. " % answer))
    parts += [("text", "Image %d: " % (len(DEMOS) + 1)), ("image", QUERY), ("text", ". Answer: ")]
    return merge(parts)


SUMMARY_PROMPTS = {
    "standard": "Generate a detailed description of the content depicted in the provided image.",
    "task-intent": "Given an image and a corresponding label, generate a descriptive caption that not only "
    "describes the image content but also conveys the intention or purpose behind the depicted scene.",
    "image-parsing": "You are presented with an image along with accompanying labels. Your task is to provide "
    "a detailed description of the image content while also explaining the observations and reasoning "
    "process behind your description.",
    "iois": "Generate a descriptive caption for the provided image and labels, elucidating both the visual "
    "content and the underlying purpose or intention depicted. Craft a clear and concise description that "
    "seamlessly integrates details from the image and labels, highlighting connections between visual cues "
    "and semantic meaning. Your caption should not only describe what is visible in the image but also "
    "convey the task-oriented aspect.",
}


def tokens(parts, image_tokens=256):
    return sum((len(v.encode()) + 3) // 4 if k == "text" else image_tokens for k, v in parts)


def budget_example():
    # VICL emotion prompt with three demonstrations; the budget admits exactly two.
    summaries = ["x" * 40, "y" * 40, "z" * 40]
    answers = ["happy", "sad", "angry"]

    def prompt(n):
        parts = [("text", INSTRUCTION["emotion"] % ", ".join(LABELS["emotion"]) + " ")]
        for i in range(n):
            parts.append(("text", "Image %d: %s. Answer: %s. " % (i + 1, summaries[i], answers[i])))
        parts += [("text", "Image %d: " % (n + 1)), ("image", QUERY), ("text", ". Answer: ")]
        return merge(parts)

    sizes = [tokens(prompt(n)) for n in range(4)]
    return {"summaries": summaries, "answers": answers, "sizes": sizes, "budget": sizes[2], "expected_keep": 2}


def flow_example():
    seq, labels, q, span = 6, [2, 4], 5, (1, 2)
    sets = {"wp": [], "pq": [], "vq": [], "ww": []}
    for i in range(seq):
        for j in range(i):
            if i in labels:
                sets["wp"].append((i, j))
            elif i == q and j in labels:
                sets["pq"].append((i, j))
            elif i == q and span[0] <= j < span[1]:
                sets["vq"].append((i, j))
            else:
                sets["ww"].append((i, j))
    means = {k: (sum(i + j for i, j in v) / len(v) if v else 0.0) for k, v in sets.items()}
    return {"seq_len": seq, "labels": labels, "target": q, "span": list(span),
            "sizes": {k: len(v) for k, v in sets.items()}, "means_i_plus_j": means}


def synthetic_trace(seed, L, H, S, labels, target, span):
    rng = SplitMix64(seed)
    att = [0.0] * (L * H * S * S)
    grad = [0.0] * (L * H * S * S)
    for l in range(L):
        for h in range(H):
            for i in range(S):
                base = ((l * H + h) * S + i) * S
                ws = []
                for j in range(i + 1):
                    ws.append(0.05 + rng.unit())
                total = 0.0
                for w in ws:
                    total += w
                for j in range(i + 1):
                    att[base + j] = ws[j] / total
                    grad[base + j] = 2.0 * rng.unit() - 1.0
    nest = lambda flat: [[[flat[((l * H + h) * S + i) * S:((l * H + h) * S + i) * S + S]
                           for i in range(S)] for h in range(H)] for l in range(L)]
    return {"num_layers": L, "num_heads": H, "seq_len": S, "attention": nest(att), "grad": nest(grad),
            "label_positions": labels, "target_position": target, "image_span": list(span)}


def sample_ids(n, limit, seed):
    order = list(range(n))
    SplitMix64(seed).shuffle(order)
    return sorted(order[:limit])


def encode_index(dim, entries):
    out = b"VICL" + struct.pack("<IIQ", 1, dim, len(entries))
    for ident, vec in entries:
        b = ident.encode()
        out += struct.pack("<I", len(b)) + b + struct.pack("<%df" % dim, *vec)
    return out


def main():
    os.makedirs(FIXTURES, exist_ok=True)
    os.makedirs(GOLDEN, exist_ok=True)

    rng_vectors = {}
    for seed in (0, 42, 0xDEADBEEF):
        r = SplitMix64(seed)
        rng_vectors[str(seed)] = [str(r.next()) for _ in range(8)]
    r = SplitMix64(42)
    units = [r.unit() for _ in range(4)]
    r = SplitMix64(42)
    belows = [r.below(10) for _ in range(8)]
    items = list(range(10))
    SplitMix64(42).shuffle(items)

    oracles = {
        "splitmix64": {"next": rng_vectors, "unit_seed42": units, "below10_seed42": belows,
                       "shuffle10_seed42": items},
        "sha256": {s: hashlib.sha256(s.encode()).hexdigest() for s in
                   ["", "abc", "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"]},
        "base64": {"": "", "f": "Zg==", "fo": "Zm8=", "foo": "Zm9v", "foobar": "Zm9vYmFy"},
        "mock_hash_embedding_hello_dim4": hash_embedding(b"hello", 4),
        "mock_clustered_class2_dim8": clustered_embedding(2, b"class2_0001", 8),
        "cosine": {"a": [1.0, 0.0, 0.0], "b": [1.0, 2.0, 2.0], "expected": 1.0 / 3.0},
        "prompt_sha256": {
            "parts": [["text", "Describe "], ["image", "query-image"], ["text", " now"]],
            "expected": prompt_sha256([("text", "Describe "), ("image", b"query-image"), ("text", " now")]),
        },
        "cache_key": {"image": "img", "prompt": "prompt", "model": "model",
                      "expected": hashlib.sha256(b"img\x00prompt\x00model").hexdigest()},
        "budget": budget_example(),
        "flow": flow_example(),
        "sample_items_10_4_seed42": sample_ids(10, 4, 42),
        "index_encoding": {
            "dim": 2, "entries": [["a", [1.0, -0.5]], ["bc", [0.25, 2.0]]],
            "hex": encode_index(2, [("a", [1.0, -0.5]), ("bc", [0.25, 2.0])]).hex(),
        },
    }
    with open(os.path.join(FIXTURES, "oracles.json"), "w") as f:
        json.dump(oracles, f, indent=1, sort_keys=True)
        f.write("\n")

    # Damaged indices: a NaN component, a cut-off tail, a wrong magic.
    good = encode_index(3, [("x1", [0.5, -1.0, 2.0]), ("x2", [1.0, 0.0, 0.25])])
    damaged = {
        "index_nan.bin": encode_index(3, [("x1", [0.5, float("nan"), 2.0])]),
        "index_truncated.bin": good[:-5],
        "index_bad_magic.bin": b"VICX" + good[4:],
    }
    for name, data in damaged.items():
        with open(os.path.join(FIXTURES, name), "wb") as f:
            f.write(data)

    # Built with seed 7.
    trace = synthetic_trace(7, 3, 2, 12, [3, 7], 11, (8, 10))
    with open(os.path.join(FIXTURES, "t1.json"), "w") as f:
        json.dump(trace, f)
        f.write("\n")

    for kind in ("emotion", "object"):
        answers = LABELS[kind][:2]
        for mode in ("zero_shot", "icl", "vicl"):
            text = display(render(kind, mode, answers))
            with open(os.path.join(GOLDEN, "prompt_%s_%s.txt" % (kind, mode)), "w") as f:
                f.write(text)
    for name, text in SUMMARY_PROMPTS.items():
        parts = [("text", text), ("image", DEMOS[0]["image"])]
        if name != "standard":
            parts.append(("text", "Label: happy"))
        with open(os.path.join(GOLDEN, "summary_%s.txt" % name.replace("-", "_")), "w") as f:
            f.write(display(parts))


if __name__ == "__main__":
    main()
