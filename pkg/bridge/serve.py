#!/usr/bin/env python3
"""Stdio evaluation bridge: trains a tiny text classifier per request.

Speaks the line-delimited JSON evaluation protocol (version 1) on
stdin/stdout.  Each request's params configure one training run of a small
one-hidden-layer classifier on the bundled labelled-text dataset; the reply's
reward is the validation accuracy.

Recognised params (anything else is ignored and counted in the metrics):
  learning_rate  SGD step size (float, clamped to >= 0)
  dropout_rate   hidden-layer dropout probability (float, clamped to [0, 0.95])
  layer_size     hidden width (rounded to an int >= 1)

Replies are deterministic for a fixed --seed and identical params.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import zlib
from pathlib import Path

import numpy as np

PROTOCOL_VERSION = 1
FEATURE_DIM = 64
BATCH_SIZE = 16
VAL_FRACTION = 0.25

DEFAULTS = {"learning_rate": 0.1, "dropout_rate": 0.0, "layer_size": 16}


def load_dataset(path: Path):
    texts, labels = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            texts.append(row["text"])
            labels.append(row["label"])
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ValueError(f"dataset {path} needs at least 2 classes, found {classes}")
    y = np.array([classes.index(l) for l in labels], dtype=np.int64)
    x = np.zeros((len(texts), FEATURE_DIM))
    for i, text in enumerate(texts):
        for tok in text.lower().split():
            x[i, zlib.crc32(tok.encode()) % FEATURE_DIM] += 1.0
    return x, y, classes


def split_indices(n: int, seed: int):
    """Deterministic shuffle-split: first 75% train, rest validation."""
    order = np.random.default_rng(seed).permutation(n)
    cut = int(n * (1.0 - VAL_FRACTION))
    return order[:cut], order[cut:]


def parse_params(params: dict):
    known, ignored = dict(DEFAULTS), 0
    for name, value in params.items():
        if name not in DEFAULTS:
            ignored += 1
            continue
        known[name] = value
    lr = max(0.0, float(known["learning_rate"]))
    dropout = min(max(float(known["dropout_rate"]), 0.0), 0.95)
    hidden = max(1, int(round(float(known["layer_size"]))))
    return lr, dropout, hidden, ignored


def train_and_score(x, y, n_classes, train_idx, val_idx, lr, dropout, hidden,
                    epochs, rng):
    """One-hidden-layer softmax classifier, plain SGD.

    The output layer starts at zero, so with lr = 0 every prediction is
    class 0 and the reward equals the validation share of the first class.
    """
    dim = x.shape[1]
    w1 = rng.normal(0.0, 0.5, size=(dim, hidden))
    b1 = np.zeros(hidden)
    w2 = np.zeros((hidden, n_classes))
    b2 = np.zeros(n_classes)

    xt, yt = x[train_idx], y[train_idx]
    for _ in range(epochs):
        order = rng.permutation(len(xt))
        for start in range(0, len(xt), BATCH_SIZE):
            sel = order[start:start + BATCH_SIZE]
            xb, yb = xt[sel], yt[sel]
            h = np.tanh(xb @ w1 + b1)
            if dropout > 0.0:
                mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
                h = h * mask
            logits = h @ w2 + b2
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            grad = p
            grad[np.arange(len(yb)), yb] -= 1.0
            grad /= len(yb)
            dh = grad @ w2.T * (1.0 - h * h)
            w2 -= lr * (h.T @ grad)
            b2 -= lr * grad.sum(axis=0)
            w1 -= lr * (xb.T @ dh)
            b1 -= lr * dh.sum(axis=0)

    def accuracy(idx):
        h = np.tanh(x[idx] @ w1 + b1)
        pred = np.argmax(h @ w2 + b2, axis=1)
        return float(np.mean(pred == y[idx]))

    return accuracy(val_idx), accuracy(train_idx)


def request_rng(seed: int, params: dict):
    digest = zlib.crc32(json.dumps(params, sort_keys=True).encode())
    return np.random.default_rng([seed, digest])


def serve(args, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def reply(obj):
        print(json.dumps(obj), file=stdout, flush=True)

    x, y, classes = load_dataset(Path(args.dataset))
    train_idx, val_idx = split_indices(len(y), args.seed)

    hello = stdin.readline()
    if not hello:
        return 0
    try:
        if json.loads(hello)["hello"]["protocol"] != PROTOCOL_VERSION:
            raise ValueError("unsupported protocol version")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        reply({"id": None, "error": f"bad handshake: {exc}"})
        return 1
    reply({"ready": {"protocol": PROTOCOL_VERSION}})

    for line in stdin:
        if not line.strip():
            continue
        req_id = None
        try:
            req = json.loads(line)
            req_id = req.get("id") if isinstance(req, dict) else None
            params = req["params"]
            if not isinstance(params, dict):
                raise TypeError("params must be an object")
            lr, dropout, hidden, ignored = parse_params(params)
        except Exception as exc:
            reply({"id": req_id, "error": f"malformed request: {exc}"})
            continue
        rng = request_rng(args.seed, params)
        val_acc, train_acc = train_and_score(
            x, y, len(classes), train_idx, val_idx, lr, dropout, hidden,
            args.epochs, rng,
        )
        reply({
            "id": req_id,
            "reward": val_acc,
            "metrics": {"train_accuracy": train_acc, "ignored_params": float(ignored),
                        "epochs": float(args.epochs)},
        })
    return 0


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dataset", default=str(Path(__file__).parent / "data" / "mini_dataset.csv"))
    parser.add_argument("--epochs", type=int, default=4)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    return serve(args)


if __name__ == "__main__":
    sys.exit(main())
