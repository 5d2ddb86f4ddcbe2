import pathlib
import shutil

import pytest
import sphinx

# sphinx does not register its test fixtures as a plugin
pytest_plugins = ['sphinx.testing.fixtures']

ROOTS = pathlib.Path(__file__).parent.absolute() / 'roots'


def _as_sphinx_path(path):
    # make_app takes plain paths from sphinx 7.2 on
    if sphinx.version_info >= (7, 2, 0):
        return pathlib.Path(path)
    from sphinx.testing import path as sphinx_path

    return sphinx_path.path(str(path))


@pytest.fixture
def rootdir(tmp_path):
    """A scratch copy of the documentation roots used by the docs tests."""
    dst = tmp_path / 'roots'
    shutil.copytree(ROOTS, dst)
    yield _as_sphinx_path(dst)
    shutil.rmtree(dst)
