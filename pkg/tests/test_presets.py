from __future__ import annotations

import pytest

from lsmstall.model import MB
from lsmstall.presets import PRESET_NAMES, preset


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_validate(name):
    p = preset(name)
    assert p.variants
    assert len(set(p.labels)) == len(p.labels)


def test_partition_sweep_range():
    sizes = [cfg.policy.file_max for _, cfg in preset("leveldb_partition_size_sweep").variants]
    assert sizes[0] == 8 * MB and sizes[-1] == 32 * 1024 * MB and len(sizes) == 13


def test_burst_variants():
    p = preset("burst_limit_vs_nolimit")
    assert p.get("limit").scheduler.write_interaction == "rate_limit"
    assert p.get("no_limit").scheduler.write_interaction == "as_fast_as_possible"
    assert p.get("limit").scheduler.max_rate == 4000.0


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset("nope")
