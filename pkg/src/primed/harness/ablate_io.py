"""Text and CSV renderings of an ablation table."""

from __future__ import annotations

import csv
import io


def table_to_csv(table: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["variant", "J_mean", "J_std", "F_mean", "F_std", "S_mean", "S_std"])
    for row in table["rows"]:
        writer.writerow(
            [row["name"]]
            + [f"{row[k]:.4f}" for k in ("J_mean", "J_std", "F_mean", "F_std", "S_mean", "S_std")]
        )
    return buf.getvalue()


def table_to_text(table: dict) -> str:
    ev = table["eval"]
    subset = ev["split"] + (f" / {ev['template']}" if ev.get("template") else "")
    header = ["variant", "J", "F", "S"]
    lines = [
        f"ablation on {subset}, seeds {table['seeds']} (mean +/- spread)",
        "",
    ]
    body = []
    for row in table["rows"]:
        body.append(
            [
                row["name"],
                f"{row['J_mean']:6.2f} +/- {row['J_std']:5.2f}",
                f"{row['F_mean']:6.2f} +/- {row['F_std']:5.2f}",
                f"{row['S_mean']:6.4f} +/- {row['S_std']:6.4f}",
            ]
        )
    widths = [max(len(header[i]), *(len(r[i]) for r in body)) for i in range(len(header))]
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)))
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(header))))
    return "\n".join(lines) + "\n"
