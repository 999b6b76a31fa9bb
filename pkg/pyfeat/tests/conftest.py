import pytest

from pyfeat import cli


@pytest.fixture(scope="session")
def views_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("views")
    code = cli.main(
        [
            "demo",
            "--out", str(out),
            "--n", "2",
            "--length", "15",
            "--seed", "7",
            "--t5-dim", "24",
            "--sa-dim", "16",
        ]
    )
    assert code == 0
    return out


@pytest.fixture(scope="session")
def exported_bank(views_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("bank") / "demo.mmfb"
    code = cli.main(
        ["export", "--views", str(views_dir), "--out", str(out), "--seed", "11"]
    )
    assert code == 0
    return out
