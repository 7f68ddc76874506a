#!/usr/bin/env python3
"""End-to-end checks of the irag command line against the mock gateway."""

import argparse
import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

QUESTION = "What is the maximum file size for uploads?"


class Runner:
    def __init__(self, irag, root, work):
        self.irag = irag
        self.root = root
        self.work = work
        self.failures = []

    def run(self, *args, env=None, expect=0):
        full_env = {k: v for k, v in os.environ.items() if not k.startswith("GATEWAY_")}
        full_env.update(env or {})
        proc = subprocess.run([self.irag, *map(str, args)], cwd=self.work, env=full_env, capture_output=True,
                              text=True, timeout=300)
        if proc.returncode != expect:
            self.fail(f"irag {' '.join(map(str, args))}: exit {proc.returncode}, expected {expect}\n{proc.stderr}")
        return proc

    def check(self, cond, what):
        if not cond:
            self.fail(what)

    def fail(self, what):
        self.failures.append(what)
        print("FAIL:", what)

    def src(self, rel):
        return self.root / rel


def workflow(r, out_dir):
    """ingest -> index build -> query -> eval; returns the produced bytes by name."""
    out_dir.mkdir(parents=True, exist_ok=True)
    mock = ["--gateway", "mock:1", "--playbook", r.src("tests/fixtures/playbooks/judge.json")]
    corpus, index = out_dir / "corpus.jsonl", out_dir / "relay.idx"
    r.run("ingest", "--in", r.src("tests/fixtures/relay_issues.jsonl"), "--out", corpus)
    r.run("index", "build", "--corpus", corpus, "--out", index, "--gateway", "mock:1")
    query = r.run("query", "--index", index, "--q", QUESTION, *mock).stdout
    eval_md = r.run("eval", "--dataset", r.src("datasets/system_qa.jsonl"), "--index", index, "--runs", "1",
                    "--model", "mock-chat", *mock).stdout
    return {"corpus": corpus.read_bytes(), "index": index.read_bytes(), "query": query, "eval": eval_md}


def test_workflow(r):
    a = workflow(r, r.work / "run_a")
    b = workflow(r, r.work / "run_b")
    for name in a:
        r.check(a[name] == b[name], f"{name} differs between two identical runs")

    result = json.loads(a["query"])
    r.check(result["context_found"] is True, "in-domain query abstained")
    r.check(result["generated_at"] == "1970-01-01T00:00:00Z", "mock runs must use the fixed clock")
    r.check(len(result["evidence"]) >= 1, "no evidence cited")
    r.check(a["corpus"].count(b"\n") >= 20, "corpus unexpectedly small")

    golden = r.src("tests/golden/cli_eval.md")
    if os.environ.get("IRAG_UPDATE_GOLDEN") == "1":
        golden.write_text(a["eval"], encoding="utf-8")
    elif not golden.exists():
        r.fail("tests/golden/cli_eval.md is missing; run with IRAG_UPDATE_GOLDEN=1")
    else:
        r.check(golden.read_text(encoding="utf-8") == a["eval"], "eval report differs from tests/golden/cli_eval.md")
    r.check("| LLM | ARS | Faith. | Help. | Doc. Rel. |" in a["eval"], "report lacks the summary table")


def test_formats_and_derange(r):
    index = r.work / "run_a" / "relay.idx"
    mock = ["--gateway", "mock:1", "--playbook", r.src("tests/fixtures/playbooks/judge.json")]
    js = r.run("eval", "--dataset", r.src("datasets/system_qa.jsonl"), "--index", index, "--runs", "1",
               "--metrics", "ars_binary,doc_relevance", "--format", "json", "--derange", "--seed", "5", *mock).stdout
    reports = json.loads(js)
    r.check(len(reports) == 1, "one model gives one report")
    r.check(reports[0]["dataset_tag"] == "robustness", "--derange retags the dataset")
    r.check(reports[0]["config"]["deranged"] is True, "--derange is recorded in the snapshot")

    csv_out = r.work / "report.csv"
    r.run("eval", "--dataset", r.src("datasets/out_of_domain.jsonl"), "--index", index, "--runs", "1",
          "--format", "csv", "--out", csv_out, *mock)
    r.check(csv_out.read_text().startswith("model,dataset,qa_id,run,metric,value,valid,justification\n"),
            "csv header")

    d1 = r.run("derange", "--in", r.src("datasets/system_qa.jsonl"), "--seed", "3").stdout
    d2 = r.run("derange", "--in", r.src("datasets/system_qa.jsonl"), "--seed", "3").stdout
    r.check(d1 == d2, "derange is not deterministic")
    original = [json.loads(line) for line in r.src("datasets/system_qa.jsonl").read_text().splitlines() if line]
    shuffled = [json.loads(line) for line in d1.splitlines() if line]
    r.check(len(original) == len(shuffled), "derange changed the dataset size")
    r.check(all(o["reference_answer"] != s["reference_answer"] for o, s in zip(original, shuffled)),
            "derange left a reference in place")


def test_config_and_env(r):
    index = r.work / "run_a" / "relay.idx"
    playbook = r.src("tests/fixtures/playbooks/cooperative.json").as_posix()
    cfg = r.work / "custom.toml"
    cfg.write_text('[gateway]\nurl = "mock:1"\nplaybook = "%s"\n[index]\npath = "%s"\n' % (playbook, index.as_posix()))
    via_file = r.run("--config", cfg, "query", "--q", QUESTION).stdout
    via_env = r.run("query", "--index", index, "--q", QUESTION,
                    env={"GATEWAY_URL": "mock:1", "GATEWAY_PLAYBOOK": playbook}).stdout
    via_flag = r.run("query", "--index", index, "--q", QUESTION, "--gateway", "mock:1", "--playbook", playbook,
                     env={"GATEWAY_URL": "http://127.0.0.1:1"}).stdout
    r.check(via_file != "" and via_file == via_env == via_flag, "file, env and flag configuration disagree")
    r.check(json.loads(via_file)["context_found"] is True, "configured query abstained")

    # without a playbook the mock only answers with placeholder text, which generation rejects
    r.run("query", "--index", index, "--q", QUESTION, "--gateway", "mock:1", expect=2)

    # irag.toml in the working directory is read without --config
    (r.work / "irag.toml").write_text(cfg.read_text())
    implicit = r.run("query", "--q", QUESTION).stdout
    (r.work / "irag.toml").unlink()
    r.check(implicit == via_file, "irag.toml in the working directory was not picked up")

    bad = r.work / "bad.toml"
    bad.write_text("[gateway]\nurl = mock\n")
    r.run("--config", bad, "query", "--q", QUESTION, expect=1)
    r.run("--config", r.work / "absent.toml", "query", "--q", QUESTION, expect=1)
    r.run("query", "--index", index, "--q", QUESTION, env={"GATEWAY_URL": "mock:1", "GATEWAY_TIMEOUT_S": "soon"},
          expect=1)


def test_exit_codes(r):
    index = r.work / "run_a" / "relay.idx"
    r.run("query", "--index", r.work / "missing.idx", "--q", QUESTION, "--gateway", "mock:1", expect=2)
    corrupt = r.work / "corrupt.idx"
    corrupt.write_bytes(index.read_bytes()[:100])
    r.run("query", "--index", corrupt, "--q", QUESTION, "--gateway", "mock:1", expect=2)
    r.run("query", "--index", index, "--gateway", "mock:1", expect=1)
    r.run("frobnicate", expect=1)
    r.run(expect=1)
    r.run("eval", "--dataset", r.src("datasets/system_qa.jsonl"), "--index", index, "--format", "html",
          "--gateway", "mock:1", expect=1)
    r.run("query", "--index", index, "--q", QUESTION, "--gateway", "mock:x", expect=1)
    r.run("query", "--index", index, "--q", QUESTION, "--gateway", "http://127.0.0.1:1", "--timeout", "0.5", expect=2)
    bad_csv = r.work / "bad.csv"
    bad_csv.write_text('id,title,body\n1,"unterminated,x\n')
    r.run("ingest", "--in", bad_csv, "--out", r.work / "x.jsonl", expect=1)
    r.check(r.run("--help").stdout.count("eval") >= 1, "--help lists the subcommands")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--irag", required=True)
    ap.add_argument("--root", required=True, type=Path)
    ap.add_argument("--work", required=True, type=Path)
    args = ap.parse_args()
    shutil.rmtree(args.work, ignore_errors=True)
    args.work.mkdir(parents=True)

    r = Runner(str(Path(args.irag).resolve()), args.root.resolve(), args.work.resolve())
    for test in (test_workflow, test_formats_and_derange, test_config_and_env, test_exit_codes):
        before = len(r.failures)
        test(r)
        print(("ok   " if len(r.failures) == before else "FAIL ") + test.__name__)
    return 1 if r.failures else 0


if __name__ == "__main__":
    sys.exit(main())
