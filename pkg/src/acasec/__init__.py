"""Compile spreadsheet-style assurance workbooks into claims-arguments-evidence graphs."""

from acasec.builder import BuildOptions, build_case
from acasec.emit import from_canonical, report_markdown, to_canonical, to_graph_text, write_workbook
from acasec.ingest import parse_workbook
from acasec.model import AssuranceCase, audit_structure
from acasec.taxonomy import DecompositionFrame, standard_frame
from acasec.validate import assess_confidence, check_coverage

__all__ = [
    "AssuranceCase",
    "BuildOptions",
    "DecompositionFrame",
    "assess_confidence",
    "audit_structure",
    "build_case",
    "check_coverage",
    "from_canonical",
    "parse_workbook",
    "report_markdown",
    "standard_frame",
    "to_canonical",
    "to_graph_text",
    "write_workbook",
]
