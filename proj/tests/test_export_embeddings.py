import hashlib
import json
import os
import subprocess
import sys
import tempfile
import unittest

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tools"))
import export_embeddings as ex  # noqa: E402

CLI = os.environ.get("WICE_CLI_PATH")


class WriteCache(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    def test_format(self):
        path = os.path.join(self.dir, "c.cache")
        texts = ["b text", "a text", "Ünïcödé ✓"]
        vecs = np.arange(1, 13, dtype=np.float64).reshape(3, 4)
        manifest = ex.write_cache(path, "m1", texts, vecs)
        lines = open(path, encoding="utf-8").read().splitlines()
        self.assertEqual(lines[0], "dim=4 provider=m1")
        keys = [l.split("\t")[0] for l in lines[1:]]
        self.assertEqual(keys, sorted(hashlib.sha256(t.encode()).hexdigest() for t in texts))
        for l in lines[1:]:
            v = np.array([float(x) for x in l.split("\t")[1].split(" ")])
            self.assertAlmostEqual(float(np.linalg.norm(v)), 1.0, places=12)
        self.assertEqual(manifest["text_count"], 3)
        self.assertEqual(manifest["content_sha256"], hashlib.sha256(open(path, "rb").read()).hexdigest())

    def test_zero_vector_rejected(self):
        with self.assertRaises(ValueError):
            ex.write_cache(os.path.join(self.dir, "z.cache"), "m", ["a"], np.zeros((1, 4)))

    def test_model_unavailable(self):
        graphs = os.path.join(self.dir, "g.jsonl")
        with open(graphs, "w") as f:
            f.write(json.dumps({"reference_text": "ref", "nodes": [{"kind": "text", "text": "hi"}]}) + "\n")
        env = dict(os.environ, HF_HUB_OFFLINE="1", TRANSFORMERS_OFFLINE="1")
        r = subprocess.run([sys.executable, ex.__file__, "--graphs", graphs, "--model",
                            os.path.join(self.dir, "no-such-model"), "--out", os.path.join(self.dir, "o")],
                           env=env, capture_output=True, text=True)
        self.assertEqual(r.returncode, 2, r.stderr)
        self.assertIn("ModelUnavailable", r.stderr)

    @unittest.skipUnless(CLI, "WICE_CLI_PATH not set")
    def test_cli_consumes_exported_cache(self):
        corpus = os.path.join(self.dir, "corpus")
        graphs = os.path.join(self.dir, "g.jsonl")
        subprocess.run([CLI, "synth", "--out", corpus, "--pages", "20", "--sites", "2"], check=True,
                       capture_output=True)
        subprocess.run([CLI, "preprocess", "--corpus", corpus, "--out", graphs], check=True, capture_output=True)
        texts = ex.unique_texts(graphs)
        rng = np.random.default_rng(0)
        cache = os.path.join(self.dir, "ext.cache")
        ex.write_cache(cache, "fake-model", texts, rng.standard_normal((len(texts), 24)))
        r = subprocess.run([CLI, "embed", "--graphs", graphs, "--provider", "cache", "--cache", cache, "--dim", "24",
                            "--out", os.path.join(self.dir, "emb.cache")], capture_output=True, text=True)
        self.assertEqual(r.returncode, 0, r.stderr)
        report = json.loads(r.stdout)
        self.assertEqual(report["processed"], 20)
        self.assertEqual(report.get("failures", {}), {})


if __name__ == "__main__":
    unittest.main()
