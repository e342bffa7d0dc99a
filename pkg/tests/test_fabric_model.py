import pytest

from baseline_pnr import Routing
from errors import ValidationError
from fabric_model import (ArchSpec, BlockType, NodeKind, Occupancy, ResourceMask, _pin_tracks,
                          build_rrg, check_rrg, load_arch, save_arch, size_arch, spare_mask)


def _unit_arch(**overrides) -> ArchSpec:
    values = dict(grid_width=1, grid_height=1, bles_per_clb=1, clb_inputs=2, io_capacity=1,
                  channel_width_w=2, fc_in=1.0, fc_out=1.0, tb_column_period=0)
    values.update(overrides)
    return ArchSpec(**values)


def test_single_clb_node_enumeration():
    rrg = build_rrg(_unit_arch())

    # 4 I/O tiles x (SOURCE, OPIN, IPIN, SINK), one BLE, two inputs, two tracks per channel segment
    assert rrg.node_count == 30
    assert rrg.kind_histogram() == {'SOURCE': 5, 'OPIN': 5, 'IPIN': 6, 'SINK': 6,
                                    'CHANX': 4, 'CHANY': 4}
    assert rrg.block_type(0, 0) == BlockType.EMPTY
    assert rrg.block_type(1, 0) == BlockType.IO
    assert rrg.block_type(1, 1) == BlockType.CLB
    assert check_rrg(rrg) == []


def test_switch_blocks_keep_the_track():
    rrg = build_rrg(_unit_arch(channel_width_w=4))
    channel = (NodeKind.CHANX, NodeKind.CHANY)
    for src, dst in rrg.edges():
        if rrg.kinds[src] in channel and rrg.kinds[dst] in channel:
            assert rrg.indices[src] == rrg.indices[dst]


def test_trace_buffer_columns_and_pins():
    arch = ArchSpec(grid_width=3, grid_height=2, tb_column_period=2, tb_inputs_per_block=3)
    rrg = build_rrg(arch)

    assert arch.column_kinds() == [BlockType.IO, BlockType.CLB, BlockType.TB, BlockType.CLB,
                                   BlockType.TB, BlockType.CLB, BlockType.IO]
    assert len(rrg.tb_locations()) == 4
    assert len(rrg.trace_inputs()) == 4 * 3
    assert len(rrg.trigger_pins()) == 4
    for pin in rrg.trace_inputs() + rrg.trigger_pins():
        assert rrg.fan_in(pin) > 0
        assert all(rrg.kinds[src] == NodeKind.CHANX for src in rrg.in_edges[pin])
    assert check_rrg(rrg) == []


def test_transposed_grid_swaps_channel_counts():
    wide = build_rrg(ArchSpec(grid_width=3, grid_height=2, tb_column_period=0)).kind_histogram()
    tall = build_rrg(ArchSpec(grid_width=2, grid_height=3, tb_column_period=0)).kind_histogram()

    assert wide['CHANX'] == tall['CHANY']
    assert wide['CHANY'] == tall['CHANX']
    for kind in ('SOURCE', 'OPIN', 'IPIN', 'SINK'):
        assert wide[kind] == tall[kind]


def test_serialization_is_deterministic():
    arch = ArchSpec(grid_width=2, grid_height=2, tb_column_period=2)
    assert build_rrg(arch).serialize() == build_rrg(arch).serialize()


@pytest.mark.parametrize("field, value", [
    ('fc_in', 0.0),
    ('fc_out', 1.5),
    ('channel_width_w', 3),
    ('channel_width_w', 0),
    ('tb_column_period', 1),
    ('grid_width', 0),
    ('lut_size_k', 1),
])
def test_invalid_architecture_names_the_field(field, value):
    with pytest.raises(ValidationError) as excinfo:
        build_rrg(_unit_arch(**{field: value}))
    assert excinfo.value.field == field


def test_arch_from_dict_rejects_unknown_and_missing_fields():
    with pytest.raises(ValidationError):
        ArchSpec.from_dict({'grid_width': 2, 'grid_height': 2, 'switch_pattern': 'wilton'})
    with pytest.raises(ValidationError):
        ArchSpec.from_dict({'grid_width': 2})


def test_arch_file_round_trip(tmp_path):
    arch = ArchSpec(grid_width=5, grid_height=3, fc_in=0.25)
    path = str(tmp_path / "arch.json")
    save_arch(arch, path)
    assert load_arch(path) == arch


def test_pin_tracks_spread_over_the_channel():
    assert _pin_tracks(1.0, 4, 0) == [0, 1, 2, 3]
    assert _pin_tracks(0.5, 4, 1) == [1, 3]
    assert len(_pin_tracks(0.01, 12, 5)) == 1


def test_size_arch_fits_blocks():
    template = ArchSpec(grid_width=1, grid_height=1)
    arch = size_arch(template, ble_blocks=50, io_blocks=30, utilization=0.8)

    assert arch.grid_width * arch.grid_height * arch.bles_per_clb >= 50
    interior = len(arch.column_kinds()) - 2
    assert 2 * (interior + arch.grid_height) * arch.io_capacity >= 30
    with pytest.raises(ValidationError):
        size_arch(template, 10, 4, utilization=0.0)


def test_spare_mask_marks_user_nodes():
    rrg = build_rrg(_unit_arch())
    assert spare_mask(rrg, Routing()).count(Occupancy.FREE) == rrg.node_count

    source = rrg.node(NodeKind.SOURCE, 1, 1, 0)
    opin = rrg.node(NodeKind.OPIN, 1, 1, 0)
    mask = spare_mask(rrg, Routing({'n': {source: -1, opin: source}}, 2))
    assert mask.nodes_with(Occupancy.USER) == sorted([source, opin])
    assert not mask.is_free(opin)


def test_mask_copy_and_dict_form():
    mask = ResourceMask(5)
    mask.mark([1, 3], Occupancy.OVERLAY_TRACE)
    copy = mask.copy()
    copy.mark([0], Occupancy.USER)

    assert mask.flag(0) == Occupancy.FREE
    assert ResourceMask.from_dict(mask.to_dict()) == mask
    with pytest.raises(ValidationError):
        ResourceMask(3, [0, 0])
