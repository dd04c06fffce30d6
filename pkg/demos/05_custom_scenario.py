"""Scenario files, a two-slope LoS path loss and the command-line front end."""
import subprocess
import sys
import tempfile
from pathlib import Path

from smallcell import config as C
from smallcell import coverage as V

near = C.PathLossPiece(30.8, 2.7, 4.28, 2.42)
far = C.PathLossPiece(30.8, 2.7, 4.28, 4.0)
cfg = C.sirp_rayleigh(lam=50.0, pathloss=C.PathLossModel((near, far), (1000.0,)),
                      blockage=C.NegExp(1 / 141.4))
print(C.dumps(cfg))

r = V.coverage_probability(cfg)
print(f"p_c = {r.p_c:.4f} (NLoS {r.p_c_nl:.4f}, LoS {r.p_c_l:.4f})")

with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "scenario.toml"
    path.write_text(C.dumps(cfg))
    subprocess.run([sys.executable, "-m", "smallcell", "coverage", "--config", str(path),
                    "--lambdas", "10,100", "--out", d], check=True)
    print((Path(d) / "coverage.csv").read_text())
