"""Source tree scanner: find getenv call sites and classify them.

For every file with a known extension the scanner separates comment,
string, and code regions using the language's comment and string syntax,
then finds whole-word, case-insensitive `getenv` occurrences and classifies
each:

    CALL               code occurrence followed by '(' (whitespace and
                       comments may intervene, across lines)
    COMMENT_OR_STRING  occurrence inside a comment or string literal
    IDENTIFIER         any other code occurrence (wrappers, assignments,
                       function pointers)

LOC counts lines that still contain non-whitespace after comment removal;
string content counts as code for this purpose. The per-tree summary also
derives lines-per-call, a coarse call-density figure.
"""

from __future__ import annotations

import enum
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

WORD_RE = re.compile(r"(?i)(?<![0-9A-Za-z_])getenv(?![0-9A-Za-z_])")

DEFAULT_EXTENSIONS = ("c", "h", "cc", "cpp", "hpp", "py", "sh", "js")


class OccurrenceKind(enum.Enum):
    CALL = "call"
    COMMENT_OR_STRING = "comment-or-string"
    IDENTIFIER = "identifier"


@dataclass(frozen=True)
class LanguageSyntax:
    line_comments: Tuple[str, ...] = ()
    block_comments: Tuple[Tuple[str, str], ...] = ()
    quotes: Tuple[str, ...] = ()
    triple_quotes: Tuple[str, ...] = ()
    escape_in_quotes: bool = True


C_LIKE = LanguageSyntax(
    line_comments=("//",),
    block_comments=(("/*", "*/"),),
    quotes=('"', "'"),
)
PYTHON = LanguageSyntax(
    line_comments=("#",),
    quotes=('"', "'"),
    triple_quotes=('"""', "'''"),
)
SHELL = LanguageSyntax(
    line_comments=("#",),
    quotes=('"', "'"),
    escape_in_quotes=False,
)
JS = LanguageSyntax(
    line_comments=("//",),
    block_comments=(("/*", "*/"),),
    quotes=('"', "'", "`"),
)

LANGUAGES: Dict[str, LanguageSyntax] = {
    "c": C_LIKE,
    "h": C_LIKE,
    "cc": C_LIKE,
    "cpp": C_LIKE,
    "hpp": C_LIKE,
    "cxx": C_LIKE,
    "hh": C_LIKE,
    "java": C_LIKE,
    "go": C_LIKE,
    "rs": C_LIKE,
    "py": PYTHON,
    "pyi": PYTHON,
    "sh": SHELL,
    "bash": SHELL,
    "js": JS,
    "ts": JS,
}

# per-character region classes
_CODE = "c"
_COMMENT = "m"
_STRING = "s"


def _mask_lines(lines: Sequence[str], syntax: LanguageSyntax) -> List[str]:
    """One mask string per line: code, comment, or string per character."""
    masks: List[str] = []
    block_end: Optional[str] = None  # open block comment terminator
    triple_end: Optional[str] = None  # open triple-quoted string terminator

    for line in lines:
        mask = [_CODE] * len(line)
        i = 0
        n = len(line)
        while i < n:
            if block_end is not None:
                end = line.find(block_end, i)
                if end < 0:
                    for j in range(i, n):
                        mask[j] = _COMMENT
                    i = n
                else:
                    for j in range(i, end + len(block_end)):
                        mask[j] = _COMMENT
                    i = end + len(block_end)
                    block_end = None
                continue
            if triple_end is not None:
                end = line.find(triple_end, i)
                if end < 0:
                    for j in range(i, n):
                        mask[j] = _STRING
                    i = n
                else:
                    for j in range(i, end + len(triple_end)):
                        mask[j] = _STRING
                    i = end + len(triple_end)
                    triple_end = None
                continue

            ch = line[i]
            matched = False
            for marker in syntax.line_comments:
                if line.startswith(marker, i):
                    for j in range(i, n):
                        mask[j] = _COMMENT
                    i = n
                    matched = True
                    break
            if matched:
                continue
            for begin, end_marker in syntax.block_comments:
                if line.startswith(begin, i):
                    close = line.find(end_marker, i + len(begin))
                    if close < 0:
                        for j in range(i, n):
                            mask[j] = _COMMENT
                        i = n
                        block_end = end_marker
                    else:
                        for j in range(i, close + len(end_marker)):
                            mask[j] = _COMMENT
                        i = close + len(end_marker)
                    matched = True
                    break
            if matched:
                continue
            for quote in syntax.triple_quotes:
                if line.startswith(quote, i):
                    close = line.find(quote, i + len(quote))
                    if close < 0:
                        for j in range(i, n):
                            mask[j] = _STRING
                        i = n
                        triple_end = quote
                    else:
                        for j in range(i, close + len(quote)):
                            mask[j] = _STRING
                        i = close + len(quote)
                    matched = True
                    break
            if matched:
                continue
            if ch in syntax.quotes:
                j = i + 1
                while j < n:
                    if syntax.escape_in_quotes and line[j] == "\\":
                        j += 2
                        continue
                    if line[j] == ch:
                        break
                    j += 1
                stop = min(j + 1, n)  # unterminated: string to end of line
                for k in range(i, stop):
                    mask[k] = _STRING
                i = stop
                continue
            i += 1
        masks.append("".join(mask))
    return masks


@dataclass(frozen=True)
class Occurrence:
    line: int  # 1-based
    column: int  # 0-based
    kind: OccurrenceKind


@dataclass
class FileReport:
    path: str
    loc: int = 0
    occurrences: List[Occurrence] = field(default_factory=list)
    error: Optional[str] = None

    def count(self, kind: OccurrenceKind) -> int:
        return sum(1 for occ in self.occurrences if occ.kind is kind)


@dataclass
class ScanTotals:
    files: int = 0
    loc: int = 0
    calls: int = 0
    comment_or_string: int = 0
    identifiers: int = 0
    errors: int = 0

    @property
    def lines_per_call(self) -> Optional[int]:
        if self.calls == 0:
            return None
        return round(self.loc / self.calls)

    def as_dict(self) -> Dict[str, object]:
        return {
            "files": self.files,
            "loc": self.loc,
            "calls": self.calls,
            "comment_or_string": self.comment_or_string,
            "identifiers": self.identifiers,
            "lines_per_call": self.lines_per_call,
            "errors": self.errors,
        }


@dataclass
class ScanReport:
    files: List[FileReport]
    totals: ScanTotals


def _next_code_char(
    lines: Sequence[str], masks: Sequence[str], line_idx: int, col: int
) -> Optional[str]:
    """First non-whitespace code character at or after (line_idx, col),
    skipping comment regions entirely."""
    for li in range(line_idx, len(lines)):
        start = col if li == line_idx else 0
        line = lines[li]
        mask = masks[li]
        for ci in range(start, len(line)):
            if mask[ci] == _COMMENT:
                continue
            if line[ci].isspace():
                continue
            return line[ci]
    return None


def scan_text(path: str, text: str, syntax: LanguageSyntax) -> FileReport:
    lines = text.split("\n")
    masks = _mask_lines(lines, syntax)
    report = FileReport(path=path)

    for li, (line, mask) in enumerate(zip(lines, masks)):
        has_content = any(mask[ci] != _COMMENT and not line[ci].isspace() for ci in range(len(line)))
        if has_content:
            report.loc += 1
        for match in WORD_RE.finditer(line):
            start = match.start()
            region = mask[start]
            if region in (_COMMENT, _STRING):
                kind = OccurrenceKind.COMMENT_OR_STRING
            else:
                following = _next_code_char(lines, masks, li, match.end())
                kind = OccurrenceKind.CALL if following == "(" else OccurrenceKind.IDENTIFIER
            report.occurrences.append(Occurrence(line=li + 1, column=start, kind=kind))
    return report


def scan_file(path, syntax: Optional[LanguageSyntax] = None) -> FileReport:
    path = Path(path)
    if syntax is None:
        syntax = LANGUAGES.get(path.suffix.lstrip(".").lower())
    if syntax is None:
        return FileReport(path=str(path), error="unknown extension")
    try:
        text = path.read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        return FileReport(path=str(path), error=str(exc))
    return scan_text(str(path), text, syntax)


def scan_tree(root, extensions: Sequence[str] = DEFAULT_EXTENSIONS) -> ScanReport:
    """Scan every matching file under root (deterministic order)."""
    wanted = {ext.lstrip(".").lower() for ext in extensions}
    reports: List[FileReport] = []
    root = Path(root)
    if root.is_file():
        reports.append(scan_file(root))
    else:
        for dirpath, dirnames, filenames in os.walk(root):
            dirnames.sort()
            for filename in sorted(filenames):
                ext = Path(filename).suffix.lstrip(".").lower()
                if ext in wanted:
                    reports.append(scan_file(Path(dirpath) / filename))

    totals = ScanTotals()
    for rep in reports:
        if rep.error is not None:
            totals.errors += 1
            continue
        totals.files += 1
        totals.loc += rep.loc
        totals.calls += rep.count(OccurrenceKind.CALL)
        totals.comment_or_string += rep.count(OccurrenceKind.COMMENT_OR_STRING)
        totals.identifiers += rep.count(OccurrenceKind.IDENTIFIER)
    return ScanReport(files=reports, totals=totals)
