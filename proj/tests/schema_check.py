#!/usr/bin/env python3
"""Validate CLI and HTTP payloads against the shipped JSON schemas.

usage: schema_check.py TRIAGE_BIN SCHEMA_DIR [--dump DIR]
"""

import argparse
import json
import socket
import subprocess
import sys
import tempfile
import time
import urllib.error
import urllib.request
from pathlib import Path

import cv2
import jsonschema
import numpy as np

W, H = 64, 48

# v1 sits at location 3 and reaches severity 4; v2 has no location and one Bad frame.
VIDEOS = {
    "v1": (3, [[5, 2], [5, 1], [5]]),
    "v2": (None, [[6], [5, 6, 0]]),
}


def label_line(cls):
    x0, x1 = 1 + 8 * cls, 7 + 8 * cls
    return f"{cls} {(x0 + x1) / 2 / W:.6f} {22 / H:.6f} {(x1 - x0) / W:.6f} {36 / H:.6f}"


def write_study(root: Path, sid: str) -> Path:
    d = root / sid
    for sub in ("images", "dets", "gt"):
        (d / sub).mkdir(parents=True, exist_ok=True)
    videos = []
    for vid, (loc, frames) in VIDEOS.items():
        entries = []
        for i, classes in enumerate(frames):
            fid = f"{vid}-f{i}"
            cv2.imwrite(str(d / "images" / f"{fid}.png"), np.full((H, W), 20 * i, np.uint8))
            lines = [label_line(c) for c in classes]
            (d / "dets" / f"{fid}.txt").write_text("".join(l + " 0.9\n" for l in lines))
            (d / "gt" / f"{fid}.txt").write_text("".join(l + "\n" for l in lines))
            entries.append({"frame_id": fid, "image": f"images/{fid}.png",
                            "detections": f"dets/{fid}.txt", "ground_truth": f"gt/{fid}.txt"})
        videos.append({"video_id": vid, "scan_location": loc, "fps": 25.0, "frames": entries})
    manifest = {"study_id": sid, "probe_type": "convex", "subject": {"age": 41}, "videos": videos}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return d / "manifest.json"


class Checker:
    def __init__(self, schema_dir: Path, dump: Path | None):
        self.schemas = {p.name.removesuffix(".schema.json"): json.loads(p.read_text())
                        for p in schema_dir.glob("*.schema.json")}
        self.dump = dump
        self.failures = 0
        self.count = 0

    def check(self, schema: str, label: str, doc):
        self.count += 1
        if self.dump:
            (self.dump / f"{label.replace('/', '_').strip('_')}.json").write_text(json.dumps(doc, indent=2))
        try:
            jsonschema.validate(doc, self.schemas[schema],
                                format_checker=jsonschema.FormatChecker())
            print(f"ok    {schema:<16} {label}")
        except (jsonschema.ValidationError, KeyError) as e:
            self.failures += 1
            msg = e.message if isinstance(e, jsonschema.ValidationError) else f"no schema {e}"
            print(f"FAIL  {schema:<16} {label}: {msg}")


def cli(binary, *args):
    r = subprocess.run([binary, *map(str, args)], capture_output=True, text=True)
    if r.returncode != 0:
        raise SystemExit(f"{' '.join(map(str, args))} failed: {r.stderr}")
    return r.stdout


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def request(base, path, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(base + path, data=data,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=10) as r:
            return r.status, json.loads(r.read())
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("triage")
    ap.add_argument("schemas", type=Path)
    ap.add_argument("--dump", type=Path)
    a = ap.parse_args()
    c = Checker(a.schemas, a.dump)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cli_root, svc_root = tmp / "cli", tmp / "svc"
        m = write_study(cli_root, "s1")
        write_study(svc_root, "s1")

        c.check("manifest", "manifest", json.loads(m.read_text()))
        c.check("score", "cli score", json.loads(cli(a.triage, "score", "--manifest", m)))
        cli(a.triage, "report", "--manifest", m, "--out", tmp / "report.json")
        c.check("report", "cli report", json.loads((tmp / "report.json").read_text()))
        cli(a.triage, "summarize", "--manifest", m, "--video", "v1", "--out", tmp / "sum")
        c.check("summary", "cli summarize", json.loads((tmp / "sum" / "summary.json").read_text()))
        for iou in ("0.5", "sweep"):
            c.check("evaluate", f"cli evaluate {iou}", json.loads(
                cli(a.triage, "evaluate", "--gt-manifest", m, "--pred-manifest", m, "--iou", iou)))
        (tmp / "cm.json").write_text(json.dumps({
            "rows": ["Abnormal", "Normal"], "columns": ["Abnormal", "Normal", "Undetected"],
            "counts": [[89, 3, 1], [6, 29, 2]]}))
        c.check("confusion", "confusion input", json.loads((tmp / "cm.json").read_text()))
        c.check("metrics", "cli metrics", json.loads(
            cli(a.triage, "metrics", "--confusion", tmp / "cm.json", "--exclude", "Undetected")))
        c.check("metrics", "cli metrics binary", json.loads(
            cli(a.triage, "metrics", "--confusion", tmp / "cm.json", "--binary")))
        c.check("queue", "cli queue", json.loads(cli(a.triage, "queue", "--manifest", m)))
        (tmp / "ann.json").write_text(json.dumps(
            [{"class": "Pleura", "bbox": [1, 4, 7, 40]}, {"class": "BLines", "bbox": [17, 4, 23, 40]}]))
        c.check("override", "cli override", json.loads(cli(
            a.triage, "override", "--manifest", m, "--frame", "v2-f0", "--author", "dr-a",
            "--annotations", tmp / "ann.json", "--note", "missed pleura")))
        cli(a.triage, "export", "--manifest", m, "--out", tmp / "exp")
        c.check("export", "cli export", json.loads((tmp / "exp" / "export_manifest.json").read_text()))

        port = free_port()
        base = f"http://127.0.0.1:{port}"
        proc = subprocess.Popen([a.triage, "serve", "--root", svc_root, "--addr", f"127.0.0.1:{port}"],
                                stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        try:
            for _ in range(200):
                try:
                    request(base, "/api/studies")
                    break
                except (urllib.error.URLError, ConnectionError):
                    time.sleep(0.05)
            gets = [("studies", "/api/studies"), ("report", "/api/studies/s1/report"),
                    ("video", "/api/studies/s1/videos/v1"), ("frame", "/api/studies/s1/frames/v1-f0"),
                    ("queue", "/api/studies/s1/queue")]
            for schema, path in gets:
                status, doc = request(base, path)
                assert status == 200, (path, status)
                c.check(schema, f"GET {path}", doc)
            body = {"author": "dr-a", "annotations": json.loads((tmp / "ann.json").read_text())}
            c.check("override_request", "override body", body)
            status, doc = request(base, "/api/studies/s1/frames/v2-f0/override", body)
            assert status == 201, status
            c.check("override", "POST override", doc)
            status, doc = request(base, "/api/studies/s1/frames/v2-f0")
            c.check("frame", "GET overridden frame", doc)
            status, doc = request(base, "/api/studies/s1/export", {"format": "xml"})
            assert status == 200, status
            c.check("export", "POST export", doc)
            for path, body in [("/api/studies/s1/frames/nope", None),
                               ("/api/studies/s1/frames/v1-f0/override",
                                {"author": "a", "annotations": [{"class": "Rib", "bbox": [0, 0, 99, 1]}]}),
                               ("/api/studies/s1/export", {"format": "pdf"})]:
                status, doc = request(base, path, body)
                assert status >= 400, (path, status)
                c.check("error", f"{status} {path}", doc)
        finally:
            proc.terminate()
            proc.wait(timeout=10)

    print(f"{c.count - c.failures}/{c.count} payloads valid")
    return 1 if c.failures else 0


if __name__ == "__main__":
    sys.exit(main())
