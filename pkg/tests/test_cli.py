import datetime as dt

import pytest

from resipmon.cli import main


def run(argv, tmp_path, monkeypatch):
    monkeypatch.setenv("RESIPMON_DATA_ROOT", str(tmp_path / "data"))
    return main(argv)


def test_no_arguments_usage_exit_2(tmp_path, monkeypatch, capsys):
    assert run([], tmp_path, monkeypatch) == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_subcommand_exit_2(tmp_path, monkeypatch):
    with pytest.raises(SystemExit) as exc:
        run(["pdns", "frobnicate"], tmp_path, monkeypatch)
    assert exc.value.code == 2


def test_module_without_op_exit_2(tmp_path, monkeypatch):
    assert run(["pdns"], tmp_path, monkeypatch) == 2


def test_pdns_lifetimes_smoke(tmp_path, monkeypatch):
    data = tmp_path / "data"
    assert run(["pdns", "gen-synthetic", "--services", "2", "--ips", "30",
                "--seed", "3", "--out", "stream.tsv"], tmp_path, monkeypatch) == 0
    assert run(["pdns", "lifetimes", "--in", str(data / "stream.tsv"),
                "--out", "lifetimes.csv", "--cdf", "cdf.csv"],
               tmp_path, monkeypatch) == 0
    text = (data / "lifetimes.csv").read_text()
    assert text.startswith("# resipmon")
    assert "service,ip,lifetime_days,intervals" in text
    assert (data / "cdf.csv").exists()


def test_pdns_usage_and_daily_and_evolution(tmp_path, monkeypatch):
    data = tmp_path / "data"
    run(["pdns", "gen-synthetic", "--services", "1", "--ips", "40",
         "--seed", "5", "--out", "stream.tsv"], tmp_path, monkeypatch)
    service = "yunip168.com"
    assert run(["pdns", "usage", "--in", str(data / "stream.tsv"),
                "--out", "usage.csv"], tmp_path, monkeypatch) == 0
    assert service in (data / "usage.csv").read_text()
    assert run(["pdns", "daily", "--in", str(data / "stream.tsv"),
                "--service", service, "--out", "daily.csv"],
               tmp_path, monkeypatch) == 0
    assert run(["pdns", "evolution", "--in", str(data / "stream.tsv"),
                "--service", service, "--window", "7",
                "--out", "evo.csv", "--summary", "evo.json"],
               tmp_path, monkeypatch) == 0
    assert '"crest_day"' in (data / "evo.json").read_text()


def test_classify_eval_byte_identical(tmp_path, monkeypatch):
    data = tmp_path / "data"
    assert run(["classify", "gen-synthetic", "--rps", "30", "--non", "40",
                "--seed", "3", "--out", "corpus.jsonl"], tmp_path, monkeypatch) == 0
    assert run(["classify", "featurize", "--corpus", str(data / "corpus.jsonl"),
                "--out", "features.tsv"], tmp_path, monkeypatch) == 0
    argv = ["classify", "eval", "--features", str(data / "features.tsv"),
            "--k", "10", "--seed", "7", "--trees", "15", "--out", "report.json"]
    assert run(argv, tmp_path, monkeypatch) == 0
    first = (data / "report.json").read_bytes()
    assert run(argv, tmp_path, monkeypatch) == 0
    assert (data / "report.json").read_bytes() == first


def test_classify_train_predict_round(tmp_path, monkeypatch):
    data = tmp_path / "data"
    run(["classify", "gen-synthetic", "--rps", "25", "--non", "40",
         "--seed", "2", "--out", "corpus.jsonl"], tmp_path, monkeypatch)
    run(["classify", "featurize", "--corpus", str(data / "corpus.jsonl"),
         "--out", "features.tsv"], tmp_path, monkeypatch)
    assert run(["classify", "train", "--features", str(data / "features.tsv"),
                "--trees", "15", "--seed", "1", "--out", "model.json"],
               tmp_path, monkeypatch) == 0
    assert run(["classify", "predict", "--model", str(data / "model.json"),
                "--features", str(data / "features.tsv"),
                "--out", "pred.tsv"], tmp_path, monkeypatch) == 0
    lines = [l for l in (data / "pred.tsv").read_text().splitlines()
             if l and not l.startswith("#")]
    assert len(lines) == 65
    assert all(l.split("\t")[1] in ("RPS", "NonRPS") for l in lines)


def test_classify_select_keywords(tmp_path, monkeypatch):
    data = tmp_path / "data"
    run(["classify", "gen-synthetic", "--rps", "20", "--non", "30",
         "--seed", "2", "--out", "corpus.jsonl"], tmp_path, monkeypatch)
    assert run(["classify", "select-keywords", "--corpus",
                str(data / "corpus.jsonl"), "--top", "15",
                "--out", "ranked.tsv"], tmp_path, monkeypatch) == 0
    ranked = [l.split("\t")[0] for l in (data / "ranked.tsv").read_text().splitlines()
              if l and not l.startswith("#")]
    assert "proxy" in ranked[:5]


def test_harvest_cli(tmp_path, monkeypatch):
    data = tmp_path / "data"
    assert run(["harvest", "queries", "--out", "jobs.tsv"],
               tmp_path, monkeypatch) == 0
    jobs = [l for l in (data / "jobs.tsv").read_text().splitlines()
            if l and not l.startswith("#")]
    assert len(jobs) == 78
    entries = tmp_path / "entries.tsv"
    entries.write_text("http://one.com/a\tisp proxy\ten\tgoogle\t1\n"
                       "http://one.com/b\tisp proxy\ten\tbing\t2\n",
                       encoding="utf-8")
    assert run(["harvest", "ingest", "--in", str(entries), "--out", "cand.tsv"],
               tmp_path, monkeypatch) == 0
    assert "one.com\t2" in (data / "cand.tsv").read_text()


def test_analytics_dist_deterministic(tmp_path, monkeypatch):
    data = tmp_path / "data"
    ips = tmp_path / "ips.txt"
    ips.write_text("10.0.0.1\n10.0.0.2\n10.1.0.1\n", encoding="utf-8")
    geo = tmp_path / "geo.csv"
    geo.write_text("10.0.0.0/8,CN,Zhejiang,,4134,ChinaNet,,\n"
                   "10.1.0.0/16,CN,Beijing,Beijing,4808,Unicom,,\n",
                   encoding="utf-8")
    argv = ["analytics", "dist", "--ips", str(ips), "--geo", str(geo),
            "--dimension", "isp", "--out", "d.txt", "--out-csv", "d.csv"]
    assert run(argv, tmp_path, monkeypatch) == 0
    first = (data / "d.txt").read_bytes(), (data / "d.csv").read_bytes()
    assert run(argv, tmp_path, monkeypatch) == 0
    assert ((data / "d.txt").read_bytes(), (data / "d.csv").read_bytes()) == first
    assert b"ChinaNet" in first[0]


def test_collect_api_and_ports(tmp_path, monkeypatch):
    import json

    data = tmp_path / "data"
    config = tmp_path / "endpoints.json"
    sample = {"list": [{"ip": "1.2.3.4", "port": 62456}]}
    config.write_text(json.dumps([{
        "service": "svc", "url": "file-not-fetched",
        "mapping": {"items": "list", "ip": "ip", "port": "port"},
        "sample_response": sample}]), encoding="utf-8")
    # api poll fails (bad url) -> no entries, exit 1
    assert run(["collect", "api", "--config", str(config),
                "--store", "store.tsv"], tmp_path, monkeypatch) == 1
    store = data / "store.tsv"
    store.write_text("svc\t1.2.3.4\t62456\t\tapi\t\t2021-04-10T00:00:00+00:00\n"
                     "svc\t1.2.3.4\t3000\t\tapi\t\t2021-04-10T00:00:00+00:00\n",
                     encoding="utf-8")
    assert run(["analytics", "ports", "--store", str(store), "--out", "ports.csv"],
               tmp_path, monkeypatch) == 0
    assert "62456,1" in (data / "ports.csv").read_text()


def test_infiltrate_probe_and_stats_cli(tmp_path, monkeypatch):
    import sys
    sys.path.insert(0, str(tmp_path))
    from proxy_servers import ForwardingHTTPProxy
    from resipmon.infiltrate import run_echo_server

    data = tmp_path / "data"
    echo = run_echo_server(("127.0.0.1", 0), log_path=tmp_path / "echo.tsv")
    proxy = ForwardingHTTPProxy().start()
    try:
        gateway = f"{proxy.address[0]}:{proxy.address[1]}"
        assert run(["infiltrate", "probe", "--service", "svc",
                    "--gateway", gateway, "--target", echo.url,
                    "--token", "cli-1"], tmp_path, monkeypatch) == 0
        specs = tmp_path / "specs.tsv"
        specs.write_text("".join(
            f"svc\t{gateway}\thttp\t\t\t{echo.url}\ts-{i}\n" for i in range(5)),
            encoding="utf-8")
        assert run(["infiltrate", "campaign", "--specs", str(specs),
                    "--log", "obs.tsv", "--rate", "50"], tmp_path, monkeypatch) == 0
        assert run(["infiltrate", "stats", "--log", str(data / "obs.tsv"),
                    "--out-table", "t.txt", "--out-series", "s.csv"],
                   tmp_path, monkeypatch) == 0
        table = (data / "t.txt").read_text()
        assert "Provider" in table and "svc" in table
    finally:
        echo.stop()
        proxy.stop()


def test_missing_input_exit_1(tmp_path, monkeypatch, capsys):
    assert run(["pdns", "lifetimes", "--in", str(tmp_path / "nope.tsv"),
                "--out", "x.csv"], tmp_path, monkeypatch) == 1
    assert "error" in capsys.readouterr().err.lower()
