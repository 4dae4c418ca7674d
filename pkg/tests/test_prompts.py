import pytest

from ctxeval.prompts import PromptTemplate


def test_default_render_shape():
    t = PromptTemplate()
    assert t.render("Who?", "Someone did.") == "question: Who?. context: Someone did.."


def test_closed_book_keeps_shape_with_empty_context():
    t = PromptTemplate()
    assert t.render_closed_book("Who?") == "question: Who?. context: ."


def test_placeholders_required_exactly_once():
    with pytest.raises(ValueError):
        PromptTemplate("question: {question}.")
    with pytest.raises(ValueError):
        PromptTemplate("{question} {context} {context}")


def test_parse_inverts_render():
    t = PromptTemplate()
    prompt = t.render("Who leads institute 3?", "Alina Rivers 3 leads institute 3.")
    assert t.parse(prompt) == (
        "Who leads institute 3?",
        "Alina Rivers 3 leads institute 3.",
    )


def test_parse_handles_multiline_context():
    t = PromptTemplate()
    prompt = t.render("Q?", "line one.\nline two.")
    assert t.parse(prompt) == ("Q?", "line one.\nline two.")


def test_parse_rejects_mismatched_prompt():
    t = PromptTemplate()
    assert t.parse("no template here") is None


def test_custom_pattern_round_trip():
    t = PromptTemplate("C: {context} || Q: {question}")
    prompt = t.render("why", "because of rain")
    assert t.parse(prompt) == ("why", "because of rain")


def test_fingerprint_distinguishes_patterns():
    assert PromptTemplate().fingerprint() != PromptTemplate(
        "Q {question} C {context}"
    ).fingerprint()
