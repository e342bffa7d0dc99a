import pytest

from circuits import (BlockKind, OUTPUT_PREFIX, TRIGGER_PREFIX, RENT_PIN_CONSTANT, calibrate_rent_constant,
                      emit_blif, external_pins, gen_synthetic, gen_trigger, load_netlist, merge_trigger,
                      parse_netlist, parse_trigger, save_netlist)
from errors import NetlistSemanticError, NetlistSyntaxError, UnknownSignalError, ValidationError


def test_minimal_model(tiny_netlist):
    assert tiny_netlist.name == "tiny"
    assert [b.id for b in tiny_netlist.blocks] == ['a', 'b', 'y', OUTPUT_PREFIX + 'y']
    assert len(tiny_netlist.blocks_of(BlockKind.LUT)) == 1
    assert len(tiny_netlist.blocks_of(BlockKind.OUTPUT)) == 1
    # The OUTPUT block drives nothing; a, b and y are the nets
    assert [net.signal for net in tiny_netlist.nets] == ['a', 'b', 'y']
    assert tiny_netlist.net('y').sinks == ((OUTPUT_PREFIX + 'y', 0),)
    assert tiny_netlist.signals() == ['a', 'b', 'y']


def test_latch_and_multi_row_cover(user_netlist):
    q0 = user_netlist.block('q0')
    assert q0.kind == BlockKind.FF
    assert q0.inputs == ('n0',)
    assert q0.latch_args == ('re', 'clk', '0')
    assert user_netlist.block('n1').cover == ('1- 1', '-1 1')
    assert user_netlist.ble_block_count() == 4
    assert user_netlist.io_block_count() == 5


def test_emit_then_parse_is_identity(user_netlist):
    assert parse_netlist(emit_blif(user_netlist)) == user_netlist


def test_comments_and_continuations():
    text = ".model c  # top\n.inputs a \\\n b\n.outputs y\n.names a b y\n11 1\n.end\n"
    netlist = parse_netlist(text)
    assert netlist.inputs == ['a', 'b']


def test_multiple_drivers_name_the_net():
    text = ".model m\n.inputs a\n.outputs y\n.names a y\n1 1\n.names a y\n0 1\n.end\n"
    with pytest.raises(NetlistSemanticError) as excinfo:
        parse_netlist(text)
    assert excinfo.value.net == 'y'
    assert "multiple drivers" in str(excinfo.value)


def test_undriven_signal_is_named():
    text = ".model m\n.inputs a\n.outputs y\n.names a ghost y\n11 1\n.end\n"
    with pytest.raises(NetlistSemanticError) as excinfo:
        parse_netlist(text)
    assert excinfo.value.net == 'ghost'


def test_combinational_loop_names_smallest_lut():
    text = (".model m\n.inputs a\n.outputs z\n"
            ".names a q p\n11 1\n.names p q\n1 1\n.names q z\n1 1\n.end\n")
    with pytest.raises(NetlistSemanticError) as excinfo:
        parse_netlist(text)
    assert excinfo.value.net == 'p'


def test_loop_through_a_latch_is_legal():
    text = (".model m\n.inputs a\n.outputs z\n"
            ".names a q p\n11 1\n.latch p q re clk 0\n.names q z\n1 1\n.end\n")
    assert parse_netlist(text).block('q').kind == BlockKind.FF


@pytest.mark.parametrize("text, line, column", [
    (".model m\n.inputs a\n.names a y\n12 1\n.end\n", 4, 1),
    (".model m\n.inputs a\n.names a y\n1 2\n.end\n", 4, 3),
    (".model m\n.inputs a\n.subckt foo\n.end\n", 3, 1),
    (".model m\n11 1\n.end\n", 2, 1),
])
def test_syntax_errors_are_positioned(text, line, column):
    with pytest.raises(NetlistSyntaxError) as excinfo:
        parse_netlist(text)
    assert (excinfo.value.line, excinfo.value.column) == (line, column)


def test_netlist_file_round_trip(tmp_path, user_netlist):
    path = str(tmp_path / "user.blif")
    save_netlist(user_netlist, path)
    assert load_netlist(path) == user_netlist
    with pytest.raises(ValidationError):
        load_netlist(str(tmp_path / "missing.blif"))


def test_synthetic_generation_is_deterministic():
    first = gen_synthetic(7, 40, 0.65)
    assert emit_blif(first) == emit_blif(gen_synthetic(7, 40, 0.65))
    assert emit_blif(first) != emit_blif(gen_synthetic(8, 40, 0.65))


def test_synthetic_circuit_shape():
    netlist = gen_synthetic(2, 60, 0.7, lut_size=4)
    luts = netlist.blocks_of(BlockKind.LUT)

    assert len(luts) == 60
    assert all(1 <= len(b.inputs) <= 4 for b in luts)
    assert len(netlist.blocks_of(BlockKind.FF)) == 15
    assert netlist.name == "synth_60_2"


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_pin_count_follows_the_rent_rule(seed):
    expected = RENT_PIN_CONSTANT * 200 ** 0.7
    assert 0.7 * expected <= external_pins(gen_synthetic(seed, 200, 0.7)) <= 1.3 * expected


def test_frozen_pin_constant_matches_a_fresh_calibration():
    assert calibrate_rent_constant() == pytest.approx(RENT_PIN_CONSTANT, abs=0.1)


@pytest.mark.parametrize("kwargs", [
    {'n_luts': 0, 'rent_p': 0.6},
    {'n_luts': 10, 'rent_p': 1.0},
    {'n_luts': 10, 'rent_p': 0.6, 'lut_size': 1},
])
def test_synthetic_generation_rejects_bad_parameters(kwargs):
    with pytest.raises(ValidationError):
        gen_synthetic(1, **kwargs)


def test_generated_trigger_taps_user_signals():
    user = gen_synthetic(4, 30, 0.65)
    trig = gen_trigger(5, 8, user)

    assert trig.name == "trigger_8_5"
    assert len(trig.les()) == 8
    assert len(trig.blocks_of(BlockKind.FF)) == 2
    assert set(trig.inputs) <= set(user.signals())
    assert trig.fire.startswith(TRIGGER_PREFIX)
    assert trig.max_lut_inputs() <= 4
    assert emit_blif(trig) == emit_blif(gen_trigger(5, 8, user))
    with pytest.raises(ValidationError):
        gen_trigger(5, 0, user)


def test_parse_trigger_checks_user_signals(user_netlist):
    text = ".model t\n.inputs n0 q0\n.outputs f\n.names n0 q0 f\n10 1\n.end\n"
    trig = parse_trigger(text, user_netlist)
    assert trig.fire == 'f'
    assert [b.id for b in trig.les()] == ['f']

    with pytest.raises(UnknownSignalError) as excinfo:
        parse_trigger(text.replace("q0", "zz"), user_netlist)
    assert excinfo.value.signals == ['zz']

    two_outputs = ".model t\n.inputs n0\n.outputs f g\n.names n0 f\n1 1\n.names n0 g\n0 1\n.end\n"
    with pytest.raises(ValidationError):
        parse_trigger(two_outputs, user_netlist)


def test_merge_trigger_adds_fire_output(user_netlist):
    text = ".model t\n.inputs n0 q0\n.outputs f\n.names n0 q0 f\n10 1\n.end\n"
    trig = parse_trigger(text, user_netlist)
    merged = merge_trigger(user_netlist, trig)

    assert merged.outputs == ['y', 'f']
    assert merged.ble_block_count() == user_netlist.ble_block_count() + 1
    assert merged.net('n0').sinks[-1][0] == 'f'

    clash = parse_trigger(text.replace(" f", " n1"), user_netlist)
    with pytest.raises(ValidationError):
        merge_trigger(user_netlist, clash)
