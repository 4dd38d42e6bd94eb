# momentstab/report.py

"""
The report every CLI command produces, as sorted-key JSON or as
aligned text.  Both render the same numbers: floats are written with
repr(), the shortest string that reads back to the same double.

    >>> r = Report(command={'name': 'analyze'}, model={'type': 'iid'},
    ...            verdict=Verdict.STABLE, numbers={'rho': 0.25})
    >>> print(r.to_text())
    command.name  analyze
    model.type    iid
    numbers.rho   0.25
    schema        moment-stab/1
    verdict       stable
"""

import dataclasses
import json
import math
from typing import Any, Dict, Optional

import numpy as np

from .common import EXIT_CODES, Verdict

SCHEMA = 'moment-stab/1'


def _plain(value):
    """JSON-safe copy: numpy scalars and arrays unwrapped, inf/nan -> None."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Verdict):
        return value.value
    return value


@dataclasses.dataclass
class Report:
    command: Dict[str, Any]
    model: Dict[str, Any]
    verdict: Optional[Verdict] = None
    numbers: Dict[str, Any] = dataclasses.field(default_factory=dict)
    certificate: Optional[Dict[str, Any]] = None
    messages: list = dataclasses.field(default_factory=list)
    timing: Optional[Dict[str, float]] = None

    @property
    def exit_code(self):
        """0 when there is no verdict (validate, simulate)."""
        return 0 if self.verdict is None else EXIT_CODES[self.verdict]

    def to_dict(self):
        out = {'schema': SCHEMA, 'command': self.command, 'model': self.model,
               'verdict': self.verdict, 'numbers': self.numbers}
        if self.certificate is not None:
            out['certificate'] = self.certificate
        if self.messages:
            out['messages'] = self.messages
        if self.timing is not None:
            out['timing'] = self.timing
        return _plain(out)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + '\n'

    def to_text(self):
        rows = sorted(_flatten(self.to_dict()))
        width = max(len(k) for k, _ in rows)
        return '\n'.join('%-*s  %s' % (width, k, _text(v)) for k, v in rows)


def _flatten(d, prefix=''):
    for key, value in d.items():
        name = prefix + key
        if isinstance(value, dict) and value:
            yield from _flatten(value, name + '.')
        else:
            yield name, value


def _text(value):
    if value is None:
        return 'none'
    if isinstance(value, bool):
        return 'yes' if value else 'no'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        if value and all(isinstance(v, list) for v in value) and len(value) > 8:
            return '[%d rows]' % len(value)
        return '[' + ', '.join(_text(v) for v in value) + ']'
    return str(value)
