#!/usr/bin/env python3
"""Embed the unique texts of a graph file with a sentence-transformers model
and write a wice embedding cache.

Cache format: header `dim=<D> provider=<id>`, then one line per text:
sha256 hex of the UTF-8 text, a tab, D space-separated floats. Lines are
sorted by key.
"""

import argparse
import hashlib
import json
import sys

import numpy as np


class ModelUnavailable(Exception):
    pass


def unique_texts(graphs_path):
    seen = {}
    with open(graphs_path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            g = json.loads(line)
            texts = [n["text"] for n in g["nodes"] if n.get("kind") == "text"]
            texts.append(g["reference_text"])
            if g.get("title"):
                texts.append(g["title"])
            for t in texts:
                seen.setdefault(t, None)
    return list(seen)


def text_key(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_cache(path, provider_id, texts, vectors):
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero vector in export")
    vectors = vectors / norms
    rows = sorted((text_key(t), v) for t, v in zip(texts, vectors))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"dim={vectors.shape[1]} provider={provider_id}\n")
        for key, v in rows:
            f.write(key + "\t" + " ".join(repr(float(x)) for x in v) + "\n")
    with open(path, "rb") as f:
        digest = hashlib.sha256(f.read()).hexdigest()
    return {
        "model": provider_id,
        "dim": int(vectors.shape[1]),
        "text_count": len(rows),
        "cache_path": path,
        "content_sha256": digest,
    }


def load_model(model_id):
    try:
        from sentence_transformers import SentenceTransformer

        return SentenceTransformer(model_id, device="cpu")
    except Exception as e:  # missing package, missing weights, no network
        raise ModelUnavailable(f"{model_id}: {e}") from e


def export_embeddings(graphs_path, model_id, out_path, batch_size=64):
    texts = unique_texts(graphs_path)
    model = load_model(model_id)
    vectors = model.encode(texts, batch_size=batch_size, convert_to_numpy=True,
                           show_progress_bar=False)
    return write_cache(out_path, model_id.replace(" ", "_"), texts, vectors)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--graphs", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=64)
    args = p.parse_args(argv)
    try:
        manifest = export_embeddings(args.graphs, args.model, args.out, args.batch_size)
    except ModelUnavailable as e:
        print(f"error: ModelUnavailable: {e}", file=sys.stderr)
        return 2
    with open(args.out + ".manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")
    print(json.dumps(manifest))
    return 0


if __name__ == "__main__":
    sys.exit(main())
