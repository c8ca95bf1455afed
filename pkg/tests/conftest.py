import numpy as np
import pytest

from semwalk.encoding import EncodedVector
from semwalk.semantics import parse_taxonomy

# Six meanings: one synonym pair, one hyponym child, and a wash family
# with a synset pair plus a hyponym child.
TAXONOMY_TEXT = """\
put.v.1\tsyn.put\t-
place.v.1\tsyn.put\t-
put_down.v.1\tsyn.putdown\tput.v.1
wash.v.3\tsyn.wash\t-
wash_up.v.3\tsyn.wash\t-
rinse.v.1\tsyn.rinse\twash.v.3
"""


@pytest.fixture
def taxonomy(tmp_path):
    path = tmp_path / "taxonomy.tsv"
    path.write_text(TAXONOMY_TEXT, encoding="utf-8")
    return parse_taxonomy(path)


def vec(values, kind="fv"):
    return EncodedVector(values=np.asarray(values, dtype=np.float64), kind=kind)


def write_manifest(path, rows):
    """rows: list of (segment_id, person, verb, meaning_or_None, descriptor)."""
    lines = []
    for segment_id, person, verb, meaning, descriptor in rows:
        lines.append(
            "\t".join([segment_id, person, verb, meaning or "-", descriptor])
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
