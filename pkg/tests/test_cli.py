"""Command line interface: outputs and exit codes per subcommand."""

from __future__ import annotations

import json
import os
import subprocess

import pytest

from conftest import KONTEXT_CMD, PROXY_SPEC
from kontext import COMPILED_AVAILABLE, state_read, state_serialize, state_set_layer

needs_compiled = pytest.mark.skipif(
    not COMPILED_AVAILABLE, reason="compiled core not built"
)


class TestUsage:
    def test_no_command(self, cli):
        code, _, err = cli()
        assert code == 2

    def test_unknown_command(self, cli):
        code, _, err = cli("frobnicate")
        assert code == 2

    def test_missing_spec_is_usage_error(self, cli):
        code, _, err = cli("get", "getenv/http_proxy")
        assert code == 2
        assert "spec" in err


class TestSpecCheck:
    def test_ok_summary(self, cli, proxy_spec):
        code, out, err = cli("spec-check", str(proxy_spec))
        assert code == 0
        assert out == "OK: 4 keys, 1 contextual, 3 pattern entries, 0 warnings\n"
        assert err == ""

    def test_porcelain(self, cli, proxy_spec):
        code, out, _ = cli("spec-check", "--porcelain", str(proxy_spec))
        assert code == 0
        assert out == "keys=4\tcontextual=1\tpatterns=3\twarnings=0\n"

    def test_spec_flag(self, cli, proxy_spec):
        code, out, _ = cli("spec-check", "--spec", str(proxy_spec))
        assert code == 0
        assert out.startswith("OK:")

    def test_env_var_honored(self, cli, proxy_spec, monkeypatch):
        monkeypatch.setenv("KONTEXT_SPEC", str(proxy_spec))
        code, out, _ = cli("spec-check")
        assert code == 0
        assert out.startswith("OK:")

    def test_missing_file(self, cli, tmp_path):
        code, _, err = cli("spec-check", str(tmp_path / "none.ks"))
        assert code == 3
        assert "no such spec file" in err

    def test_parse_error_reports_line(self, cli, tmp_path):
        path = tmp_path / "broken.ks"
        path.write_text("a=1\n[unclosed\n")
        code, _, err = cli("spec-check", str(path))
        assert code == 3
        assert f"{path}:2: error:" in err

    def test_duplicate_key_warning(self, cli, tmp_path):
        path = tmp_path / "dup.ks"
        path.write_text("a/b=1\na/b=2\n")
        code, out, err = cli("spec-check", str(path))
        assert code == 0
        assert "warning: duplicate-key" in err
        assert "1 warnings" in out

    def test_dangling_layer_ref_warning(self, cli, tmp_path):
        path = tmp_path / "dangling.ks"
        path.write_text(
            "pool/red/*=a\npool/blue/*=b\n\n[getenv/thing]\ncontext=pool/%color%/%shade%\nvalue=d\n"
        )
        code, out, err = cli("spec-check", str(path))
        assert code == 0
        assert "%shade%" in err and "never concretized" in err
        assert "%color%" not in err
        assert "1 warnings" in out

    def test_bad_template_is_error(self, cli, tmp_path):
        path = tmp_path / "badtmpl.ks"
        path.write_text("[getenv/x]\ncontext=a/%broken\nvalue=v\n")
        code, _, err = cli("spec-check", str(path))
        assert code == 3
        assert "context template" in err


class TestGet:
    def test_hit_prints_value(self, cli, proxy_spec, state_file):
        code, out, err = cli(
            "get", "--spec", str(proxy_spec), "--state", str(state_file), "getenv/http_proxy"
        )
        assert code == 0
        assert out == "default.example.com\n"
        assert err == ""

    def test_contextual_hit_with_state(self, cli, proxy_spec, state_file):
        state_set_layer(state_file, "interface", "eth")
        state_set_layer(state_file, "network", "work")
        code, out, _ = cli(
            "get", "--spec", str(proxy_spec), "--state", str(state_file), "getenv/http_proxy"
        )
        assert code == 0
        assert out == "proxy.example.com\n"

    def test_verbose_shows_match_and_chain(self, cli, proxy_spec, state_file):
        state_set_layer(state_file, "interface", "wlan")
        state_set_layer(state_file, "network", "home")
        code, out, _ = cli(
            "get", "-v", "--spec", str(proxy_spec), "--state", str(state_file),
            "getenv/http_proxy",
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "proxy.example.org"
        assert lines[1] == "matched: http_proxy/wlan/home"
        assert lines[2] == "chain: getenv/http_proxy -> http_proxy/wlan/home"

    def test_porcelain(self, cli, proxy_spec, state_file):
        code, out, _ = cli(
            "get", "--porcelain", "--spec", str(proxy_spec), "--state", str(state_file),
            "getenv/http_proxy",
        )
        assert code == 0
        value, matched, chain = out.rstrip("\n").split("\t")
        assert value == "default.example.com"
        assert matched == "http_proxy/*/*"
        assert chain == "getenv/http_proxy,http_proxy/*/*"

    def test_absent_key_exit_one(self, cli, proxy_spec, state_file):
        code, out, err = cli(
            "get", "--spec", str(proxy_spec), "--state", str(state_file), "getenv/nope"
        )
        assert code == 1
        assert out == ""

    @pytest.mark.parametrize("engine", ["pure"] + (["compiled"] if COMPILED_AVAILABLE else []))
    def test_engine_choice(self, cli, proxy_spec, state_file, engine):
        code, out, _ = cli(
            "get", "--engine", engine, "--spec", str(proxy_spec),
            "--state", str(state_file), "getenv/http_proxy",
        )
        assert code == 0
        assert out == "default.example.com\n"

    def test_invalid_name_is_data_error(self, cli, proxy_spec, state_file):
        code, _, err = cli(
            "get", "--spec", str(proxy_spec), "--state", str(state_file), "a//b"
        )
        assert code == 3
        assert "kontext:" in err

    def test_corrupt_state_is_data_error(self, cli, proxy_spec, state_file):
        state_file.write_text("garbage\n")
        code, _, err = cli(
            "get", "--spec", str(proxy_spec), "--state", str(state_file), "getenv/http_proxy"
        )
        assert code == 3
        assert "state" in err


class TestSet:
    def test_creates_spec_file(self, cli, tmp_path):
        path = tmp_path / "new.ks"
        code, _, _ = cli("set", "--spec", str(path), "tool/editor", "vim")
        assert code == 0
        assert path.read_text() == "tool/editor=vim\n"

    def test_updates_value_in_place(self, cli, tmp_path):
        path = tmp_path / "s.ks"
        cli("set", "--spec", str(path), "tool/editor", "vim")
        code, _, _ = cli("set", "--spec", str(path), "tool/editor", "emacs")
        assert code == 0
        assert path.read_text() == "tool/editor=emacs\n"

    def test_prop_keeps_existing_value(self, cli, tmp_path):
        path = tmp_path / "s.ks"
        cli("set", "--spec", str(path), "getenv/pager", "less")
        code, _, _ = cli(
            "set", "--spec", str(path), "getenv/pager", "--prop", "context=pager/%ui%"
        )
        assert code == 0
        text = path.read_text()
        assert "[getenv/pager]" in text
        assert "value=less" in text
        assert "context=pager/%ui%" in text

    def test_value_keeps_existing_props(self, cli, tmp_path):
        path = tmp_path / "s.ks"
        cli("set", "--spec", str(path), "getenv/pager", "less", "--prop", "context=pager/%ui%")
        cli("set", "--spec", str(path), "getenv/pager", "more")
        text = path.read_text()
        assert "value=more" in text
        assert "context=pager/%ui%" in text

    def test_canonical_layout(self, cli, tmp_path):
        path = tmp_path / "s.ks"
        cli("set", "--spec", str(path), "zeta/plain", "2")
        cli("set", "--spec", str(path), "alpha/plain", "1")
        cli("set", "--spec", str(path), "getenv/x", "v", "--prop", "context=a/%l%")
        assert path.read_text() == (
            "alpha/plain=1\nzeta/plain=2\n\n[getenv/x]\nvalue=v\ncontext=a/%l%\n"
        )

    def test_remove(self, cli, tmp_path):
        path = tmp_path / "s.ks"
        cli("set", "--spec", str(path), "a/b", "1")
        cli("set", "--spec", str(path), "c/d", "2")
        code, _, _ = cli("set", "--spec", str(path), "a/b", "--remove")
        assert code == 0
        assert path.read_text() == "c/d=2\n"

    def test_remove_missing_exit_one(self, cli, tmp_path):
        path = tmp_path / "s.ks"
        cli("set", "--spec", str(path), "a/b", "1")
        code, _, err = cli("set", "--spec", str(path), "x/y", "--remove")
        assert code == 1
        assert "no such key" in err

    def test_nothing_to_set_is_usage(self, cli, tmp_path):
        code, _, err = cli("set", "--spec", str(tmp_path / "s.ks"), "a/b")
        assert code == 2
        assert "nothing to set" in err

    def test_bad_prop_is_usage(self, cli, tmp_path):
        code, _, err = cli(
            "set", "--spec", str(tmp_path / "s.ks"), "a/b", "v", "--prop", "noequals"
        )
        assert code == 2
        assert "--prop" in err

    def test_invalid_name_is_data_error(self, cli, tmp_path):
        code, _, _ = cli("set", "--spec", str(tmp_path / "s.ks"), "a//b", "v")
        assert code == 3

    def test_roundtrip_via_spec_check(self, cli, tmp_path):
        path = tmp_path / "s.ks"
        cli("set", "--spec", str(path), "getenv/http_proxy", "d", "--prop",
            "context=http_proxy/%interface%/%network%")
        cli("set", "--spec", str(path), "http_proxy/*/*", "d")
        code, out, _ = cli("spec-check", str(path))
        assert code == 0
        assert "2 keys, 1 contextual" in out


class TestLayer:
    def test_set_prints_generation(self, cli, state_file):
        code, out, _ = cli("layer", "set", "--state", str(state_file), "network", "home")
        assert code == 0
        assert out == "generation=1\n"
        code, out, _ = cli("layer", "set", "--state", str(state_file), "interface", "wlan")
        assert out == "generation=2\n"

    def test_unset(self, cli, state_file):
        cli("layer", "set", "--state", str(state_file), "network", "home")
        code, out, _ = cli("layer", "unset", "--state", str(state_file), "network")
        assert code == 0
        assert out == "generation=2\n"
        assert state_read(state_file).get("network") is None

    def test_list_human(self, cli, state_file):
        cli("layer", "set", "--state", str(state_file), "network", "home")
        cli("layer", "set", "--state", str(state_file), "interface", "wlan")
        code, out, _ = cli("layer", "list", "--state", str(state_file))
        assert code == 0
        assert out == "generation 2\ninterface = wlan\nnetwork = home\n"

    def test_list_porcelain_is_state_format(self, cli, state_file):
        cli("layer", "set", "--state", str(state_file), "network", "home")
        code, out, _ = cli("layer", "list", "--porcelain", "--state", str(state_file))
        assert code == 0
        assert out == state_serialize(state_read(state_file))

    def test_list_missing_state(self, cli, tmp_path):
        code, out, _ = cli("layer", "list", "--state", str(tmp_path / "none.ks"))
        assert code == 0
        assert out == "generation 0\n"

    def test_invalid_layer_name_is_data_error(self, cli, state_file):
        code, _, err = cli("layer", "set", "--state", str(state_file), "a/b", "v")
        assert code == 3
        assert not state_file.exists()

    def test_bad_signal_rejected_before_state_change(self, cli, state_file):
        cli("layer", "set", "--state", str(state_file), "network", "home")
        code, _, err = cli(
            "layer", "set", "--state", str(state_file), "network", "work",
            "--notify", "1", "--signal", "KILL",
        )
        assert code == 2
        assert "not allowed" in err
        ctx = state_read(state_file)
        assert ctx.generation == 1  # the bad flag stopped the write
        assert ctx.get("network") == "home"

    def test_bad_pid_list_rejected_before_state_change(self, cli, state_file):
        code, _, err = cli(
            "layer", "set", "--state", str(state_file), "network", "home",
            "--notify", "12,abc",
        )
        assert code == 2
        assert not state_file.exists()

    def test_notify_dead_pid_warns_but_succeeds(self, cli, state_file):
        dead = subprocess.Popen(["true"])
        dead.wait()
        code, out, err = cli(
            "layer", "set", "--state", str(state_file), "network", "home",
            "--notify", str(dead.pid), "--signal", "USR1",
        )
        assert code == 0
        assert out == "generation=1\n"
        assert f"notify {dead.pid}:" in err


class TestRun:
    def test_exec_failure_exit_four(self, cli, proxy_spec, state_file):
        code, _, err = cli(
            "run", "--spec", str(proxy_spec), "--state", str(state_file),
            "/no/such/binary-xyz",
        )
        assert code == 4
        assert "kontext:" in err

    def test_child_sees_contextual_value(self, demo_bins, preload_so, proxy_spec, tmp_path):
        state = tmp_path / "state.ks"
        state_set_layer(state, "interface", "wlan")
        state_set_layer(state, "network", "home")
        out = subprocess.run(
            KONTEXT_CMD + [
                "run", "--spec", str(proxy_spec), "--state", str(state),
                str(demo_bins["hello_proxy"]),
            ],
            capture_output=True,
            text=True,
            timeout=30,
        )
        assert out.returncode == 0
        assert out.stdout == "proxy.example.org\n"

    def test_child_exit_status_propagates(self, preload_so, proxy_spec, tmp_path):
        out = subprocess.run(
            KONTEXT_CMD + [
                "run", "--spec", str(proxy_spec), "--state", str(tmp_path / "s.ks"),
                "sh", "-c", "exit 7",
            ],
            capture_output=True,
            timeout=30,
        )
        assert out.returncode == 7


class TestTrace:
    def test_table_output(self, cli, demo_bins, preload_so, proxy_spec, state_file):
        code, out, err = cli(
            "trace", "--spec", str(proxy_spec), "--state", str(state_file),
            str(demo_bins["hello_proxy"]),
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0].split() == ["program", "getenv", "all", "all", "uniq", "later", "uniq", "later", "config"]
        row = lines[2].split()
        assert row[0] == str(demo_bins["hello_proxy"])
        assert row[1:] == ["1", "1", "0", "0"]

    def test_porcelain_fields(self, cli, demo_bins, preload_so, proxy_spec, state_file):
        code, out, _ = cli(
            "trace", "--porcelain", "--spec", str(proxy_spec), "--state", str(state_file),
            str(demo_bins["hello_proxy"]),
        )
        assert code == 0
        fields = dict(part.split("=") for part in out.strip().split("\t"))
        assert fields == {
            "getenv_all": "1",
            "all_uniq": "1",
            "later_uniq": "0",
            "later_config": "0",
        }

    def test_works_without_spec(self, cli, demo_bins, preload_so):
        code, out, _ = cli("trace", str(demo_bins["t01_env_present"]))
        assert code == 0
        assert "t01_env_present" in out

    def test_exec_failure_exit_four(self, cli, preload_so):
        code, _, err = cli("trace", "/no/such/binary-xyz")
        assert code == 4

    def test_child_failure_still_reports(self, cli, preload_so):
        code, out, _ = cli("trace", "sh", "-c", "exit 9")
        assert code == 0
        assert "sh" in out


class TestScan:
    def test_table_and_lines_per_call(self, cli):
        from test_scan import FIXTURES

        code, out, _ = cli("scan", str(FIXTURES))
        assert code == 0
        assert "TOTAL" in out
        assert "lines per call: 4" in out

    def test_porcelain_totals(self, cli):
        from test_scan import FIXTURES

        code, out, _ = cli("scan", "--porcelain", str(FIXTURES))
        assert code == 0
        lines = out.splitlines()
        assert lines[-1] == "total\t12\t3\t1\t1\t4"
        assert len([l for l in lines if l.startswith("file\t")]) == 2

    def test_extension_filter(self, cli):
        from test_scan import FIXTURES

        code, out, _ = cli("scan", "--porcelain", "--ext", "py", str(FIXTURES))
        assert code == 0
        assert out.splitlines()[-1] == "total\t4\t1\t0\t1\t4"

    def test_missing_root_is_data_error(self, cli, tmp_path):
        code, _, err = cli("scan", str(tmp_path / "missing"))
        assert code == 3

    def test_empty_tree_has_no_ratio(self, cli, tmp_path):
        code, out, _ = cli("scan", "--porcelain", str(tmp_path))
        assert code == 0
        assert out.splitlines()[-1] == "total\t0\t0\t0\t0\t-"


class TestBench:
    def test_iterations_floor(self, cli, proxy_spec):
        code, _, err = cli("bench", "--spec", str(proxy_spec), "-n", "10")
        assert code == 2
        assert "at least 1000" in err

    def test_porcelain_json(self, cli, proxy_spec):
        code, out, _ = cli(
            "bench", "--porcelain", "--engine", "pure", "-n", "1000",
            "--spec", str(proxy_spec),
        )
        assert code == 0
        data = json.loads(out)
        assert data["backend"] == "pure"
        assert data["key"] == "http_proxy"
        assert data["reload_count"] == 10
        assert data["steady_reloads"] == 0

    @needs_compiled
    def test_both_engines(self, cli, proxy_spec):
        code, out, _ = cli(
            "bench", "--porcelain", "--engine", "both", "-n", "1000",
            "--spec", str(proxy_spec),
        )
        assert code == 0
        reports = [json.loads(line) for line in out.splitlines()]
        assert [r["backend"] for r in reports] == ["pure", "compiled"]

    def test_no_getenv_keys_needs_explicit_key(self, cli, tmp_path):
        path = tmp_path / "plain.ks"
        path.write_text("a/b=1\n")
        code, _, err = cli("bench", "--spec", str(path), "-n", "1000")
        assert code == 2
        assert "--key" in err
