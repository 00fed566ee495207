"""Tests for prompt template loading and rendering."""
from __future__ import annotations

import pytest

from citeqa import ConfigError, PromptLibrary
from citeqa.prompts import REPROMPT_PREFIX, TEMPLATE_NAMES

FIELDS = {
    "agent1_predict": {"query": "Q", "document": "D"},
    "agent2_judge": {"query": "Q", "document": "D", "answer": "A"},
    "agent3_generate": {"query": "Q", "numbered_documents": "[1] D"},
    "agent4_analyze": {"query": "Q", "answer": "A", "claims": "- c"},
    "agent4_followup": {"question": "Q", "numbered_documents": "[1] D"},
    "agent4_synthesize": {
        "query": "Q",
        "original_answer": "A",
        "followup_answers": "F",
        "numbered_documents": "[1] D",
    },
    "judge_correctness": {"question": "Q", "gold": "G", "predicted": "P"},
    "judge_faithfulness": {"answer": "A", "passages": "P"},
}


class TestPromptLibrary:
    def test_every_template_renders(self):
        library = PromptLibrary()
        assert set(FIELDS) == set(TEMPLATE_NAMES)
        for name, fields in FIELDS.items():
            system, user = library.render(name, **fields)
            assert system and user

    def test_fields_are_substituted(self):
        library = PromptLibrary()
        _, user = library.render(
            "agent1_predict", query="why is the sky blue", document="scattering text"
        )
        assert "why is the sky blue" in user
        assert "scattering text" in user
        assert "{" not in user

    def test_relevance_protocol_question_is_fixed(self):
        # The downstream log-probability comparison assumes this exact closing
        # question; changing it silently would shift judge behavior.
        library = PromptLibrary()
        system, user = library.render("agent2_judge", query="q", document="d", answer="a")
        assert user.endswith(
            "Is this document relevant and supportive for answering the question? Answer Yes or No."
        )
        assert "Yes or No" in system

    def test_unknown_template_rejected(self):
        with pytest.raises(ConfigError, match="unknown template"):
            PromptLibrary().render("no_such_template")

    def test_missing_field_rejected(self):
        with pytest.raises(ConfigError, match="rendering failed"):
            PromptLibrary().render("agent1_predict", query="only this one")

    def test_override_directory_wins(self, tmp_path):
        (tmp_path / "agent1_predict.txt").write_text(
            "<<SYSTEM>>\ncustom system\n<<USER>>\ncustom user {query} {document}\n"
        )
        library = PromptLibrary(override_dir=tmp_path)
        system, user = library.render("agent1_predict", query="q", document="d")
        assert system == "custom system"
        assert user == "custom user q d"
        # Templates without an override still come from the package.
        system2, _ = library.render("agent2_judge", query="q", document="d", answer="a")
        assert "relevance judge" in system2

    def test_missing_override_dir_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            PromptLibrary(override_dir=tmp_path / "absent")

    def test_template_missing_sections_rejected(self, tmp_path):
        (tmp_path / "agent1_predict.txt").write_text("no sections at all")
        library = PromptLibrary(override_dir=tmp_path)
        with pytest.raises(ConfigError, match="SYSTEM"):
            library.render("agent1_predict", query="q", document="d")

    def test_template_empty_section_rejected(self, tmp_path):
        (tmp_path / "agent1_predict.txt").write_text("<<SYSTEM>>\n\n<<USER>>\nuser\n")
        library = PromptLibrary(override_dir=tmp_path)
        with pytest.raises(ConfigError, match="empty"):
            library.render("agent1_predict", query="q", document="d")

    def test_reprompt_prefix_mentions_format(self):
        assert "format" in REPROMPT_PREFIX
        assert REPROMPT_PREFIX.endswith("\n\n")
