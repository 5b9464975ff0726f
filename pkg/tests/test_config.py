from __future__ import annotations

import pytest

from twincal.config import dump_config, parse_config
from twincal.errors import ValidationError

BASE = "mu=0.01\nr_coh=43\neta_i=0.72\neta_s=0.784\nwidth=256\nheight=128\n"


def test_defaults_and_round_trip():
    cfg = parse_config(BASE + "# comment\nbin_factor=4\nl_list=12, 14,16\n")
    assert cfg.l_list == (12, 14, 16) and cfg.beta == 0.5
    assert parse_config(dump_config(cfg)) == cfg


def test_unknown_key():
    with pytest.raises(ValidationError, match="unknown key 'colour'"):
        parse_config(BASE + "colour=red\n")


def test_missing_key():
    with pytest.raises(ValidationError, match="eta_s"):
        parse_config(BASE.replace("eta_s=0.784\n", ""))


@pytest.mark.parametrize("line", ["eta_i=1.5", "bin_factor=7", "n_boot=0", "fidelity=exact", "mu=abc"])
def test_bounds_revalidated(line):
    text = "\n".join(l for l in BASE.splitlines() if not l.startswith(line.split("=")[0] + "="))
    with pytest.raises(ValidationError):
        parse_config(text + "\n" + line + "\n")


def test_duplicate_key():
    with pytest.raises(ValidationError, match="duplicate"):
        parse_config(BASE + "mu=0.2\n")
