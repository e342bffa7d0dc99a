from bench_harness import _verdict
from debug_config import emit_mux_config, fold_to_bipartite, select_signals
from stats_report_generator import StatsReportGenerator, format_text_report, project_stats
from trace_overlay import report_for


def _project(compiled, forest):
    bip = fold_to_bipartite(forest)
    config = emit_mux_config(forest, select_signals(bip, bip.signals[:3]))
    return project_stats(compiled.netlist, compiled.arch, compiled.rrg, compiled.routing,
                         forest=forest, report=report_for(forest), config=config)


def _bench():
    return {
        'kind': 'bench',
        'circuits': [{'name': 'syn50', 'luts': 50, 'grid': '4x4', 'w_min': 8, 'channel_width': 12,
                      'fraction_connected': 0.97, 'overlay_ratio': None, 'config_failures': 0}],
        'trigger': [{'circuit': 'syn50', 'les': 4, 'feasible': True, 'cost': 1.0,
                     'map_seconds': 0.01, 'recompile_seconds': 1.2, 'speedup': 120.0}],
        'summary': {'circuits': 1, 'mean_fraction_connected': 0.97},
        'acceptance': {'mean_fraction_connected': _verdict(0.97, 0.95, '>='),
                       'median_trigger_speedup': _verdict(None, 10.0, '>=')},
    }


def test_project_stats_sections(compiled, forest):
    stats = _project(compiled, forest)

    assert stats['kind'] == 'project'
    assert stats['circuit'] == 'small'
    assert stats['netlist']['luts'] == 12
    assert stats['routing']['nets'] == len(compiled.routing.trees)
    assert stats['trace_overlay']['trees'] == len(forest.trees)
    assert sum(stats['trace_overlay']['reach_histogram'].values()) == len(forest.opins)
    assert stats['debug_config']['matched'] + stats['debug_config']['unmatched'] == 3
    assert 'trigger_mapping' not in stats
    assert stats == _project(compiled, forest)


def test_text_report_lists_sections(compiled, forest):
    text = format_text_report(_project(compiled, forest))
    assert text.startswith("Project small")
    assert "[trace_overlay]" in text
    assert "[debug_config]" in text


def test_bench_text_report_marks_verdicts():
    text = format_text_report(_bench())
    assert text.startswith("Benchmark suite")
    assert "PASS  mean_fraction_connected" in text
    assert "FAIL  median_trigger_speedup: -" in text
    assert "syn50" in text


def test_pdf_reports(tmp_path, compiled, forest):
    for name, stats in (("project.pdf", _project(compiled, forest)), ("bench.pdf", _bench())):
        path = StatsReportGenerator(stats).generate_report(str(tmp_path / name))
        with open(path, 'rb') as f:
            assert f.read(4) == b'%PDF'
