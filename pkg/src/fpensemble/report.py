""" Evaluation reports: JSON document, CMC table and markdown summary.

Reports are deterministic apart from the `created` field, so two runs on
the same inputs, config and seed differ only on that line.
"""

import csv
import io
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

from .util import atomic_write, canonical_json, jrender

log = logging.getLogger(__name__)

SECTIONS = ('verification', 'identification', 'openset', 'ablation',
            'fusion_benefit', 'bench')


def timestamp():
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def cmc_path(out):
    """ Companion CMC table for a report written to `out` """
    out = Path(out)
    return out.with_name(f'{out.stem}.cmc.csv')


@dataclass
class EvalReport:
    command: str
    config: dict
    dataset: dict = field(default_factory=dict)
    verification: Optional[dict] = None
    identification: Optional[dict] = None
    openset: Optional[dict] = None
    ablation: Optional[list] = None
    fusion_benefit: Optional[dict] = None
    bench: Optional[dict] = None
    flags: List[str] = field(default_factory=list)
    created: str = field(default_factory=timestamp)

    def __post_init__(self):
        self.flags = list(self.flags)
        self._collect_flags()

    def _collect_flags(self):
        for name, method in (self.verification or {}).get('methods',
                                                           {}).items():
            for point in method.get('operating_points', []):
                if point['under_resolved']:
                    self.flag(f"{name}: FMR {point['target_fmr']:g} is "
                              f"below the impostor-set resolution")
        for name, point in (self.openset or {}).get('methods', {}).items():
            if point['flagged']:
                self.flag(f"{name}: FNIR target "
                          f"{self.openset['target_fnir']:g} unreachable; "
                          f"reported at FNIR {point['fnir']:.4f}")

    def flag(self, message):
        if message not in self.flags:
            log.warning(message)
            self.flags.append(message)

    def to_mapping(self):
        out = {'command': self.command, 'config': self.config,
               'dataset': self.dataset, 'flags': self.flags,
               'created': self.created}
        out.update((name, getattr(self, name)) for name in SECTIONS
                   if getattr(self, name) is not None)
        return out

    def dumps(self):
        return canonical_json(self.to_mapping())

    def cmc_table(self):
        """ The CMC curves as CSV text, or None if there are none """
        curves = (self.identification or {}).get('cmc')
        if not curves:
            return None
        names = list(curves)
        out = io.StringIO(newline='')
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(['rank'] + names)
        depth = max(len(c) for c in curves.values())
        for rank in range(1, depth + 1):
            writer.writerow([rank] + [f'{curves[n][rank - 1]:.6f}'
                                      for n in names])
        return out.getvalue()

    def markdown(self):
        return jrender('report.md', report=self)

    def save(self, path):
        """ Write the JSON report, and its CMC table if there is one """
        atomic_write(path, self.dumps())
        table = self.cmc_table()
        if table is not None:
            atomic_write(cmc_path(path), table)
        log.info("wrote report to %s", path)
