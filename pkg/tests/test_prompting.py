import pytest
from hypothesis import given
from hypothesis import strategies as st

from textualize.model import BBoxNorm, ObjectAnnotation, PipelineConfig
from textualize.prompting import (
    ENTITY_MARKER,
    EmptyDescription,
    MarkerMissing,
    TEMPLATE_VERSION,
    format_number,
    parse_entity_response,
    parse_recaption_response,
    render_annotations,
    render_extract_prompt,
    render_object_block,
    render_phase_a_prompt,
    render_recaption_prompt,
)

CLOCK_REFERENCE = (
    "At the center of the frame is a **black Rolex clock** mounted on a **black pole**. The clock has a "
    "**white face** with **black hands**, indicating the time. Behind the clock, there are a **brown tree "
    "trunk** with a rough texture and a traffic light. Further back, there's a **white building** with a "
    "**red tile roof**, possibly a hotel as indicated by the sign that reads \"**HOTEL**\". In front of the "
    "building, there's a **white car** parked, perhaps belonging to one of the hotel guests. Beyond this "
    "immediate scene, there's a street with a **white crosswalk**, where a bus is parked.")
CLOCK_OBJECTS = [
    ObjectAnnotation("the clock face is white", BBoxNorm(0.23, 0.06, 0.55, 0.31), 1.0, 0.0558),
    ObjectAnnotation("a person walking on the sidewalk", BBoxNorm(0.98, 0.57, 1.0, 0.6), 0.0, 0.0005),
]
SKIER_REFERENCE = ("In the heart of a winter wonderland, a lone skier, clad in a vibrant orange jacket, "
                    "carves their way down a pristine, snow-covered slope.")
SKIER_OBJECTS = [
    ObjectAnnotation("a man in a red jacket", BBoxNorm(0.800, 0.760, 0.870, 0.930), 0.96, 0.005),
    ObjectAnnotation("a backpack on the skier's back", BBoxNorm(0.81, 0.76, 0.83, 0.81), 0.92, 0.0004),
]


def test_extract_prompt_matches_golden(golden):
    bundle = render_extract_prompt("A black cat sleeps on a red sofa beside a tall lamp.")
    assert bundle.rendered == golden("extract_prompt.txt")
    assert bundle.expected_response_marker == ENTITY_MARKER
    assert bundle.rendered.startswith("###TASK DESCRIPTION###")
    assert bundle.rendered.endswith("%%%RESPONSE%%%:")


def test_recaption_prompt_matches_golden(golden):
    bundle = render_recaption_prompt(CLOCK_REFERENCE, ["a traffic light", "a bus"], CLOCK_OBJECTS)
    assert bundle.rendered == golden("recaption_prompt.txt")


def test_recaption_prompt_without_hallucinations_matches_golden(golden):
    bundle = render_recaption_prompt(SKIER_REFERENCE, [], SKIER_OBJECTS)
    assert bundle.rendered == golden("recaption_prompt_no_hallucinations.txt")


def test_marker_in_description_passes_through_with_warning():
    bundle = render_extract_prompt(f"odd {ENTITY_MARKER} text")
    assert f"%%%DESCRIPTION%%%: odd {ENTITY_MARKER} text\n" in bundle.rendered
    assert len(bundle.warnings) == 1


def test_placeholder_text_in_description_is_not_reexpanded():
    bundle = render_extract_prompt("literal <Description> and <In-Context Examples>")
    assert bundle.rendered.count("Example 1:") == 1
    assert "literal <Description> and <In-Context Examples>" in bundle.rendered


def test_parse_entity_response_examples():
    assert parse_entity_response("%%%RESPONSE%%%: black cat. gray nightstand.") == ["black cat", "gray nightstand"]
    assert parse_entity_response("%%%RESPONSE%%%:") == []
    with pytest.raises(MarkerMissing):
        parse_entity_response("no marker here")
    assert parse_entity_response("@@@ thinking. %%%RESPONSE%%%: fake. @@@\n%%%RESPONSE%%%: real one.") == ["real one"]


def test_bedroom_example_phrases():
    text = ("%%%RESPONSE%%%: red satin bedspread. gold tassels. gold pillow. red curtains. gold trim. four teddy "
            "bears. white cat. red and gold Christmas ornaments. Christmas tree. gold ornaments. two red candlesticks.")
    phrases = parse_entity_response(text)
    assert len(phrases) == 11 and phrases[:2] == ["red satin bedspread", "gold tassels"]


@pytest.mark.parametrize("value,text", [
    (1.0, "1.0"), (0.8, "0.8"), (0.96, "0.96"), (0.0, "0.0"), (0.125, "0.13"), (0.135, "0.14"),
    (0.005, "0.01"), (-0.125, "-0.13"), (2.675, "2.68"), (0.999, "1.0"), (0.1, "0.1"),
])
def test_format_number(value, text):
    assert format_number(value) == text


def test_object_block_clock_values():
    block = render_object_block(5, CLOCK_OBJECTS[1]).text.splitlines()
    assert block == [
        "Object5: a person walking on the sidewalk",
        "Relative Spatial Positioning: [0.98, 0.57, 1.0, 0.6]",
        "Distance from the Lens: 0.0",
        "Relative Size Proportion in Images (Percentage): 0.05",
    ]
    assert render_object_block(1, CLOCK_OBJECTS[0]).distance_text == "1.0"
    assert render_object_block(1, SKIER_OBJECTS[0]).positioning_text == "[0.8, 0.76, 0.87, 0.93]"


def test_size_percent_small_values():
    obj = ObjectAnnotation("dot", BBoxNorm(0, 0, 0.01, 0.01), 0.5, 0.0001)
    assert render_object_block(1, obj).size_text == "0.01"


def test_hallucination_line():
    assert render_annotations(["a traffic light", "a bus"], []).splitlines()[1] == "Hallucinations: a traffic light; a bus"
    empty = render_annotations([], [])
    assert empty.splitlines() == ["-" * 20, "Hallucinations:", "-" * 20]


def test_empty_sections_still_render():
    bundle = render_recaption_prompt("A plain wall.", [], [])
    assert "%%%The Original Description:%%% A plain wall.\n" + "-" * 20 + "\nHallucinations:\n" in bundle.rendered


def test_parse_recaption_response():
    assert parse_recaption_response("%%%Your Modified Description:%%% In the heart...") == "In the heart..."
    assert parse_recaption_response("  just text \n") == "just text"
    with pytest.raises(EmptyDescription):
        parse_recaption_response("%%%Your Modified Description:%%%   \n")
    with pytest.raises(EmptyDescription):
        parse_recaption_response("@@@ only reasoning @@@")


def test_phase_a_prompt():
    assert render_phase_a_prompt().rendered == "Describe this image in detail."
    cfg = PipelineConfig(describe_instruction="List every object.")
    bundle = render_phase_a_prompt(cfg)
    assert bundle.rendered == "List every object." and bundle.template_version == cfg.template_version
    assert bundle.expected_response_marker is None


def test_unknown_template_version():
    with pytest.raises(ValueError):
        render_extract_prompt("x", template_version="it-prompts/99")


entity = st.text(st.characters(whitelist_categories=("Ll", "Lu", "Nd"), whitelist_characters=" -'"),
                 min_size=1, max_size=15).map(lambda s: " ".join(s.split())).filter(bool)


@given(st.lists(entity, max_size=8))
def test_entity_round_trip(phrases):
    text = ENTITY_MARKER + " " + ". ".join(phrases) + "."
    assert parse_entity_response(text) == phrases


unit = st.floats(0, 1, allow_nan=False)


@st.composite
def annotation(draw):
    x1, x2 = sorted([draw(unit), draw(unit)])
    y1, y2 = sorted([draw(unit), draw(unit)])
    return ObjectAnnotation(draw(entity), BBoxNorm(x1, y1, x2, y2), draw(unit), draw(st.floats(1e-6, 1)))


def _rounded_key(reference, halluc, objects):
    blocks = tuple(
        (o.phrase, tuple(format_number(v) for v in o.bbox.as_list()), format_number(o.depth_rel),
         render_object_block(1, o).size_text)
        for o in objects)
    return reference, tuple(halluc), blocks


line = st.text(st.characters(blacklist_categories=("Cc", "Cs", "Zl", "Zp")), min_size=1, max_size=30).filter(str.strip)


@given(line, st.lists(entity, max_size=3), st.lists(annotation(), max_size=3), line,
       st.lists(entity, max_size=3), st.lists(annotation(), max_size=3))
def test_recaption_render_is_injective_up_to_rounding(r1, h1, o1, r2, h2, o2):
    a = render_recaption_prompt(r1, h1, o1).rendered
    b = render_recaption_prompt(r2, h2, o2).rendered
    assert a == render_recaption_prompt(r1, h1, o1).rendered
    if _rounded_key(r1, h1, o1) != _rounded_key(r2, h2, o2):
        assert a != b
    else:
        assert a == b


def test_template_version_constant():
    assert PipelineConfig().template_version == TEMPLATE_VERSION
