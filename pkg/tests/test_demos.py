import runpy
import sys
from pathlib import Path

import pytest

DEMOS = Path(__file__).resolve().parents[1] / "demos"


@pytest.mark.parametrize("script", ["plot_regimes.py", "plot_collapse.py", "plot_mode_spectrum.py"])
def test_demo_runs(script, tmp_path, monkeypatch):
    monkeypatch.setenv("KEEN_DEMO_OUT", str(tmp_path))
    monkeypatch.syspath_prepend(str(DEMOS))
    monkeypatch.setattr(sys, "argv", [script])
    runpy.run_path(str(DEMOS / script), run_name="__main__")
    assert list(tmp_path.glob("*.png"))
