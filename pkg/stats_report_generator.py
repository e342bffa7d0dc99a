"""
Statistics reports for the FPGA Debug Overlay Toolkit.

Builds the statistics dictionary of one project (or takes the one the bench
harness produced) and renders it as a plain-text table for the terminal,
as JSON for stats.json and, on request, as a PDF document using ReportLab.
"""

import datetime
import io
import logging
from typing import Dict, List, Optional, Any

from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER
from reportlab.lib.pagesizes import letter
from reportlab.lib.styles import getSampleStyleSheet, ParagraphStyle
from reportlab.lib.units import inch
from reportlab.platypus import SimpleDocTemplate, Paragraph, Spacer, Table, TableStyle

from baseline_pnr import MinWidthResult, Routing
from circuits import BlockKind, Netlist
from debug_config import DebugConfig
from fabric_model import ArchSpec, RoutingResourceGraph
from trace_overlay import ConnectivityReport, OverlayForest, report_for
from trigger_overlay import OverlayFabric, TriggerMapping

logger = logging.getLogger(__name__)

# Constants
FONT_NORMAL = 'Helvetica'
FONT_BOLD = 'Helvetica-Bold'

COLORS = {
    "primary": "#1f538d",
    "text_secondary": "#666666",
    "accent": "#e8f0f8",
    "border": "#d5e1ee",
    "pass": "#2ecc71",
    "fail": "#e74c3c",
}

# Bench columns: (key, header, format)
CIRCUIT_COLUMNS = [
    ('name', 'circuit', '{}'),
    ('luts', 'LUTs', '{}'),
    ('grid', 'grid', '{}'),
    ('w_min', 'w_min', '{}'),
    ('channel_width', 'W', '{}'),
    ('fraction_connected', 'connected', '{:.3f}'),
    ('overlay_ratio', 'ovl/pnr', '{:.2f}'),
    ('config_failures', 'cfg fail', '{}'),
]

TRIGGER_COLUMNS = [
    ('circuit', 'circuit', '{}'),
    ('les', 'LEs', '{}'),
    ('feasible', 'feasible', '{}'),
    ('cost', 'cost', '{:.1f}'),
    ('map_seconds', 'map s', '{:.3f}'),
    ('recompile_seconds', 'recompile s', '{:.2f}'),
    ('speedup', 'speedup', '{:.1f}'),
]


def project_stats(netlist: Netlist, arch: ArchSpec,
                  rrg: Optional[RoutingResourceGraph] = None,
                  routing: Optional[Routing] = None,
                  minw: Optional[MinWidthResult] = None,
                  forest: Optional[OverlayForest] = None,
                  report: Optional[ConnectivityReport] = None,
                  observability: Optional[Dict[int, float]] = None,
                  config: Optional[DebugConfig] = None,
                  fabric: Optional[OverlayFabric] = None,
                  mapping: Optional[TriggerMapping] = None) -> Dict[str, Any]:
    """
    Collect the statistics of one project from whatever artifacts exist.

    Sections for missing artifacts are left out. Nothing here depends on
    wall-clock time, so the result is deterministic.
    """
    stats: Dict[str, Any] = {
        'kind': 'project',
        'circuit': netlist.name,
        'netlist': {
            'luts': len(netlist.blocks_of(BlockKind.LUT)),
            'ffs': len(netlist.blocks_of(BlockKind.FF)),
            'inputs': len(netlist.inputs),
            'outputs': len(netlist.outputs),
            'nets': len(netlist.nets),
        },
        'arch': {
            'grid': f"{arch.grid_width}x{arch.grid_height}",
            'channel_width': arch.channel_width_w,
            'lut_size_k': arch.lut_size_k,
        },
    }
    if rrg is not None:
        stats['arch']['rrg_nodes'] = rrg.node_count
        stats['arch']['trace_inputs'] = len(rrg.trace_inputs())
    if minw is not None:
        stats['arch']['w_min'] = minw.w_min
    if routing is not None:
        stats['routing'] = {
            'channel_width': routing.channel_width,
            'nets': len(routing.trees),
            'wirelength': routing.wirelength(rrg) if rrg is not None else None,
        }
    if forest is not None:
        report = report or report_for(forest)
        histogram: Dict[str, int] = {}
        for reach in report.reach.values():
            histogram[str(reach)] = histogram.get(str(reach), 0) + 1
        stats['trace_overlay'] = {
            'fraction_connected': round(report.fraction_connected, 6),
            'signals': len(forest.opins),
            'unconnected': len(report.unconnected),
            'trees': len(forest.trees),
            'nodes': len(forest.nodes()),
            'reach_histogram': dict(sorted(histogram.items(), key=lambda kv: int(kv[0]))),
        }
    if observability is not None:
        stats['observability'] = {str(k): round(v, 6) for k, v in sorted(observability.items())}
    if config is not None:
        stats['debug_config'] = {
            'matched': len(config.matching),
            'unmatched': len(config.unmatched),
            'mux_selects': len(config.mux_selects),
        }
    if fabric is not None:
        stats['trigger_fabric'] = {
            'cells': len(fabric.cells),
            'spare_slots': fabric.total_slots,
            'links': len(fabric.links),
        }
    if mapping is not None:
        stats['trigger_mapping'] = {
            'feasible': mapping.feasible,
            'cost': mapping.cost,
            'annealed_cost': mapping.annealed_cost,
            'blocked': list(mapping.blocked),
            'connections': mapping.kind_counts(),
            'route_through_slots': len(mapping.route_through_slots()),
            'feed_failures': len(mapping.feed_failures),
        }
    return stats


def _format_cell(value: Any, fmt: str) -> str:
    if value is None:
        return '-'
    try:
        return fmt.format(value)
    except (ValueError, TypeError):
        return str(value)


def _table(rows: List[Dict[str, Any]], columns: List[tuple]) -> List[List[str]]:
    table = [[header for _, header, _ in columns]]
    for row in rows:
        table.append([_format_cell(row.get(key), fmt) for key, _, fmt in columns])
    return table


def _render_rows(table: List[List[str]]) -> List[str]:
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    lines = ["  ".join(cell.rjust(widths[i]) if i else cell.ljust(widths[i])
                       for i, cell in enumerate(row)) for row in table]
    lines.insert(1, "  ".join('-' * w for w in widths))
    return lines


def _render_section(title: str, values: Dict[str, Any]) -> List[str]:
    lines = [f"[{title}]"]
    width = max((len(k) for k in values), default=0)
    for key, value in values.items():
        if isinstance(value, float):
            value = f"{value:.4g}"
        elif isinstance(value, dict):
            value = ", ".join(f"{k}: {v}" for k, v in value.items()) or '-'
        elif isinstance(value, list):
            value = ", ".join(str(v) for v in value) or '-'
        lines.append(f"  {key.ljust(width)}  {value}")
    return lines


def format_text_report(stats: Dict[str, Any]) -> str:
    """Human-readable table of a project or bench statistics dictionary."""
    lines: List[str] = []
    if stats.get('kind') == 'bench':
        lines.append("Benchmark suite")
        lines.extend(_render_rows(_table(stats.get('circuits', []), CIRCUIT_COLUMNS)))
        if stats.get('trigger'):
            lines.append("")
            lines.extend(_render_rows(_table(stats['trigger'], TRIGGER_COLUMNS)))
        for section in ('summary', 'matching_oracle', 'sa_fixtures', 'system'):
            if section in stats:
                lines.append("")
                lines.extend(_render_section(section, stats[section]))
        if 'acceptance' in stats:
            lines.append("")
            lines.append("[acceptance]")
            for name, verdict in stats['acceptance'].items():
                mark = "PASS" if verdict['passed'] else "FAIL"
                lines.append(f"  {mark}  {name}: {_format_cell(verdict['value'], '{:.4g}')} "
                             f"{verdict['relation']} {verdict['threshold']}")
        return "\n".join(lines) + "\n"

    lines.append(f"Project {stats.get('circuit', '?')}")
    for section, values in stats.items():
        if isinstance(values, dict):
            lines.extend(_render_section(section, values))
    return "\n".join(lines) + "\n"


class StatsReportGenerator:
    """Renders a statistics dictionary as a PDF document."""

    def __init__(self, stats: Dict[str, Any]):
        self.stats = stats
        self.styles = self._create_styles()

    def _create_styles(self) -> Dict[str, ParagraphStyle]:
        styles = getSampleStyleSheet()
        return {
            'Title': ParagraphStyle('Title', parent=styles['Title'], fontName=FONT_BOLD,
                                    fontSize=22, leading=28, alignment=TA_CENTER,
                                    textColor=colors.HexColor(COLORS["primary"]), spaceAfter=12),
            'Heading': ParagraphStyle('Heading', parent=styles['Heading2'], fontName=FONT_BOLD,
                                      textColor=colors.HexColor(COLORS["primary"]), spaceBefore=12),
            'Body': ParagraphStyle('Body', parent=styles['BodyText'], fontName=FONT_NORMAL,
                                   fontSize=9, textColor=colors.HexColor(COLORS["text_secondary"])),
        }

    def _styled_table(self, data: List[List[str]], verdicts: Optional[List[bool]] = None) -> Table:
        table = Table(data, repeatRows=1)
        style = [
            # Header styling
            ('BACKGROUND', (0, 0), (-1, 0), colors.HexColor(COLORS["primary"])),
            ('TEXTCOLOR', (0, 0), (-1, 0), colors.white),
            ('FONTNAME', (0, 0), (-1, 0), FONT_BOLD),
            ('FONTSIZE', (0, 0), (-1, -1), 8),
            ('ALIGN', (1, 0), (-1, -1), 'RIGHT'),
            # Data styling
            ('FONTNAME', (0, 1), (-1, -1), FONT_NORMAL),
            ('GRID', (0, 0), (-1, -1), 0.5, colors.HexColor(COLORS["border"])),
            ('ROWBACKGROUNDS', (0, 1), (-1, -1), [colors.white, colors.HexColor(COLORS["accent"])]),
        ]
        for row, passed in enumerate(verdicts or (), start=1):
            style.append(('TEXTCOLOR', (0, row), (0, row),
                          colors.HexColor(COLORS["pass" if passed else "fail"])))
        table.setStyle(TableStyle(style))
        return table

    def _section_table(self, values: Dict[str, Any]) -> Table:
        rows = [["metric", "value"]]
        for key, value in values.items():
            if isinstance(value, dict):
                value = ", ".join(f"{k}: {v}" for k, v in value.items())
            elif isinstance(value, float):
                value = f"{value:.4g}"
            rows.append([key, str(value)])
        return self._styled_table(rows)

    def _build_story(self) -> List[Any]:
        story: List[Any] = []
        title = "Benchmark Report" if self.stats.get('kind') == 'bench' \
            else f"Debug Overlay Report: {self.stats.get('circuit', '')}"
        story.append(Paragraph(title, self.styles['Title']))
        story.append(Paragraph(datetime.datetime.now().strftime("Generated %Y-%m-%d %H:%M"),
                               self.styles['Body']))
        story.append(Spacer(1, 0.2 * inch))

        if self.stats.get('kind') == 'bench':
            story.append(Paragraph("Suite circuits", self.styles['Heading']))
            story.append(self._styled_table(_table(self.stats.get('circuits', []), CIRCUIT_COLUMNS)))
            if self.stats.get('trigger'):
                story.append(Paragraph("Trigger insertion", self.styles['Heading']))
                story.append(self._styled_table(_table(self.stats['trigger'], TRIGGER_COLUMNS)))
            if 'acceptance' in self.stats:
                story.append(Paragraph("Acceptance", self.styles['Heading']))
                rows = [["criterion", "value", "threshold"]]
                verdicts = []
                for name, verdict in self.stats['acceptance'].items():
                    rows.append([name, _format_cell(verdict['value'], '{:.4g}'),
                                 f"{verdict['relation']} {verdict['threshold']}"])
                    verdicts.append(verdict['passed'])
                story.append(self._styled_table(rows, verdicts))
            sections = ('summary', 'matching_oracle', 'sa_fixtures', 'system')
        else:
            sections = tuple(k for k, v in self.stats.items() if isinstance(v, dict))

        for section in sections:
            if section in self.stats:
                story.append(Paragraph(section.replace('_', ' ').capitalize(), self.styles['Heading']))
                story.append(self._section_table(self.stats[section]))
        return story

    def generate_report(self, output_path: str) -> str:
        """
        Generate the PDF report.

        Args:
            output_path: Where to write the PDF

        Returns:
            Path to the generated PDF file
        """
        buffer = io.BytesIO()
        doc = SimpleDocTemplate(buffer, pagesize=letter,
                                rightMargin=0.75 * inch, leftMargin=0.75 * inch,
                                topMargin=0.75 * inch, bottomMargin=0.75 * inch,
                                title="Debug Overlay Statistics", creator="fpga-debug-overlay")
        try:
            doc.build(self._build_story())
        except Exception as e:
            raise OSError(f"Error building PDF document: {str(e)}") from e

        with open(output_path, 'wb') as f:
            f.write(buffer.getvalue())
        logger.info("Statistics PDF written to %s", output_path)
        return str(output_path)
