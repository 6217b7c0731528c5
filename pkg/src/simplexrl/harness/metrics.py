"""Small CSV table writer with reproducible formatting.

Floats are rendered with repr (shortest round-trip form), so rerunning a
seeded experiment produces byte-identical files. No timestamps, no locale.
"""


def fmt_cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


class MetricsTable:
    def __init__(self, columns):
        self.columns = list(columns)
        self.rows = []

    def add_row(self, **kw):
        missing = set(self.columns) - set(kw)
        extra = set(kw) - set(self.columns)
        if missing or extra:
            raise ValueError(f"row keys mismatch: missing {sorted(missing)}, "
                             f"extra {sorted(extra)}")
        self.rows.append([kw[c] for c in self.columns])

    def to_csv(self):
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(fmt_cell(v) for v in row))
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w") as f:
            f.write(self.to_csv())


def eval_columns():
    return ["label", "n_trajs", "unrecoverable", "complete", "targets",
            "timeouts", "avg_return", "avg_length"]


def add_eval_row(table, label, rep):
    table.add_row(label=label, n_trajs=rep.n_trajs,
                  unrecoverable=rep.unrecoverable, complete=rep.complete,
                  targets=rep.targets, timeouts=rep.timeouts,
                  avg_return=float(rep.avg_return),
                  avg_length=float(rep.avg_length))
