"""Regenerate the bundled example configs from the class definitions in oqwlab.models."""
from pathlib import Path

from oqwlab.config import build_config, canonical_json
from oqwlab.lattice import ClassField
from oqwlab.models import ALPHA, CHECKERBOARD, example_class_a, example_class_b

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "oqwlab" / "configs"


def documents() -> dict[str, dict]:
    classes = {"A": example_class_a(ALPHA), "B": example_class_b(ALPHA)}
    reducible = build_config(
        classes, ClassField.periodic(CHECKERBOARD),
        run={"n": 200, "N": 10000, "seed": 1, "window_radius": 200, "steps": [10, 50, 100, 200]},
        rho="invariant", X0=(0, 0), reduction=("A", 2),
    )
    irreducible = build_config(
        classes, ClassField.random({"A": 0.5, "B": 0.5}, seed=1, d=2),
        run={"n": 500, "N": 10000, "seed": 2, "window_radius": 200, "steps": [10, 50, 100, 200]},
        rho="maximally-mixed", X0=(0, 0),
    )
    return {"reducible": reducible, "irreducible": irreducible}


def main() -> None:
    for name, doc in documents().items():
        (CONFIG_DIR / f"{name}.cfg").write_text(canonical_json(doc))


if __name__ == "__main__":
    main()
