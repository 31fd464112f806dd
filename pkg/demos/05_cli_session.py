"""
Command-line session
====================

Drives the ``tunechain`` command through a throwaway data directory and
replays the bundled revenue scenario.
"""

# %%
import io
import tempfile
from pathlib import Path

from tunechain import cli

HERE = Path(__file__).resolve().parent
datadir = Path(tempfile.mkdtemp()) / "tunedata"


def sh(*argv):
    out = io.StringIO()
    code = cli.main(["--datadir", str(datadir), *map(str, argv)], out=out)
    print(f"$ tunechain {' '.join(map(str, argv))}\n{out.getvalue()}(exit {code})\n")
    return out.getvalue()


# %%
sh("replay", HERE / "scenarios" / "revenue.json")
sh("revenue")
sh("explore", "--height", 0)
