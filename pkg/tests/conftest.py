from __future__ import annotations

import pytest
from hypothesis import settings

from acasec.builder import build_case
from acasec.ingest import parse_workbook
from acasec.taxonomy import standard_frame
from tests.helpers import CASE_STUDY

settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def frame():
    return standard_frame()


@pytest.fixture(scope="session")
def workbook(frame):
    return parse_workbook(CASE_STUDY, frame)


@pytest.fixture
def case(frame, workbook):
    # Function scoped: several tests mutate the case they are given.
    return build_case(frame, workbook)
