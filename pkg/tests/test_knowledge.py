from __future__ import annotations

import json
from pathlib import Path

import pytest

from editloop.config import Config
from editloop.errors import (
    ContractViolationError,
    GatewayRetryableError,
    MockScriptExhaustedError,
    ParseError,
)
from editloop.gateway import Gateway, MockProvider, configure_mock
from editloop.knowledge import (
    ExtractionCandidate,
    KnowledgeEngine,
    build_extraction_prompt,
    is_duplicate,
    jaccard_similarity,
    parse_extraction_response,
)
from editloop.ledger import EditLedger
from editloop.models import EditType, KnowledgeCategory, KnowledgeEntry, Scope
from editloop.storage.memory import MemoryStore

from .conftest import seed_world, ts
from .oracles import jaccard_sets

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN_TWO = (FIXTURES / "extraction_two_entries.json").read_text()

CATEGORY_STRINGS = (
    "domain_terminology_evolution",
    "methodological_refinements",
    "conceptual_depth_changes",
)


def entry(i, text, category=KnowledgeCategory.METHODOLOGICAL_REFINEMENTS):
    return KnowledgeEntry(
        id=f"k{i}",
        text=text,
        category=category,
        scope=Scope.PROJECT,
        scope_id="proj",
        source_question_ids=["p1-q1"],
        created_by="p1",
        created_at=ts(i),
    )


class TestBuildExtractionPrompt:
    def test_contract_headers_and_categories(self):
        prompt = build_extraction_prompt("iq", "ic", "fq", "fc")
        assert "ORIGINAL AI-GENERATED CONTENT" in prompt
        assert "FINAL USER-EDITED CONTENT" in prompt
        for category in CATEGORY_STRINGS:
            assert category in prompt

    def test_existing_knowledge_section_conditional(self):
        without = build_extraction_prompt("iq", "ic", "fq", "fc")
        assert "EXISTING KNOWLEDGE" not in without
        with_entries = build_extraction_prompt(
            "iq", "ic", "fq", "fc", existing_knowledge=[entry(1, "Known insight.")]
        )
        assert "EXISTING KNOWLEDGE" in with_entries
        assert "Known insight." in with_entries

    def test_byte_determinism(self):
        args = ("iq", "ic", "fq", "fc", [entry(1, "Known insight.")])
        assert build_extraction_prompt(*args) == build_extraction_prompt(*args)

    def test_contents_embedded(self):
        prompt = build_extraction_prompt("my initial q", "my initial c", "my final q", "my final c")
        for chunk in ("my initial q", "my initial c", "my final q", "my final c"):
            assert chunk in prompt


class TestParseExtractionResponse:
    def test_golden_two_entries(self):
        candidates = parse_extraction_response(GOLDEN_TWO)
        assert len(candidates) == 2
        assert candidates[0].category == KnowledgeCategory.DOMAIN_TERMINOLOGY_EVOLUTION
        assert candidates[1].category == KnowledgeCategory.METHODOLOGICAL_REFINEMENTS
        assert candidates[0].text.startswith("Research questions should specify")

    def test_empty_array(self):
        assert parse_extraction_response("[]") == []

    def test_four_entries_rejected(self):
        four = json.dumps(
            [{"text": f"Insight {i}.", "category": "conceptual_depth_changes"} for i in range(4)]
        )
        with pytest.raises(ContractViolationError):
            parse_extraction_response(four)

    def test_code_fences_tolerated(self):
        fenced = "```json\n" + GOLDEN_TWO + "\n```"
        assert len(parse_extraction_response(fenced)) == 2

    def test_surrounding_whitespace_tolerated(self):
        assert len(parse_extraction_response("\n\n  " + GOLDEN_TWO + "  \n")) == 2

    def test_malformed_json_is_parse_error(self):
        with pytest.raises(ParseError):
            parse_extraction_response("not json at all")
        with pytest.raises(ParseError):
            parse_extraction_response('{"text": "not an array"}')

    def test_unknown_category_dropped_with_warning(self, caplog):
        mixed = json.dumps(
            [
                {"text": "Keep me.", "category": "methodological_refinements"},
                {"text": "Drop me.", "category": "stylistic_preference"},
            ]
        )
        with caplog.at_level("WARNING"):
            candidates = parse_extraction_response(mixed)
        assert [c.text for c in candidates] == ["Keep me."]
        assert any("closed set" in r.message for r in caplog.records)


class TestIsDuplicate:
    def test_identical_same_category(self):
        candidate = ExtractionCandidate("Same text here.", KnowledgeCategory.METHODOLOGICAL_REFINEMENTS)
        assert is_duplicate(candidate, [entry(1, "Same text here.")])

    def test_identical_different_category(self):
        candidate = ExtractionCandidate(
            "Same text here.", KnowledgeCategory.CONCEPTUAL_DEPTH_CHANGES
        )
        assert not is_duplicate(candidate, [entry(1, "Same text here.")])

    def test_three_of_twenty_tokens_not_duplicate(self):
        # Two 20-token texts sharing exactly 3 distinct tokens.
        shared = ["alpha", "beta", "gamma"]
        only_a = [f"worda{i}" for i in range(17)]
        only_b = [f"wordb{i}" for i in range(17)]
        text_a = " ".join(shared + only_a)
        text_b = " ".join(shared + only_b)
        expected = jaccard_sets(set(shared + only_a), set(shared + only_b))
        assert expected == pytest.approx(3 / 37)
        assert jaccard_similarity(text_a, text_b) == pytest.approx(expected)
        candidate = ExtractionCandidate(text_a, KnowledgeCategory.METHODOLOGICAL_REFINEMENTS)
        assert not is_duplicate(candidate, [entry(1, text_b)])

    def test_punctuation_and_case_normalized(self):
        candidate = ExtractionCandidate(
            "Prefer PARTICIPANTS, not users!", KnowledgeCategory.METHODOLOGICAL_REFINEMENTS
        )
        assert is_duplicate(candidate, [entry(1, "prefer participants not users")])


def build_engine(store, script):
    provider = configure_mock(script)
    gateway = Gateway(provider, store=store, config=Config())
    return KnowledgeEngine(store, gateway, Config()), provider


class TestExtractForQuestion:
    def test_zero_distance_no_call(self, mem_store):
        _, participant, _, artifacts = seed_world(mem_store)
        engine, provider = build_engine(mem_store, ["should-not-be-consumed"])
        result = engine.extract_for_question(mem_store.get_artifact("p1-q1"), participant)
        assert result == []
        assert provider.call_count == 0
        assert mem_store.get_artifact("p1-q1").knowledge_processed is True

    def test_golden_end_to_end(self, mem_store):
        _, participant, _, _ = seed_world(mem_store)
        ledger = EditLedger(mem_store)
        artifact = mem_store.get_artifact("p1-q1")
        ledger.record_edit(
            "p1-q1",
            EditType.DIRECT_EDIT,
            "question",
            artifact.current_question,
            "How do novice users versus domain experts differ in reading accuracy?",
        )
        engine, provider = build_engine(mem_store, [GOLDEN_TWO])
        entries = engine.extract_for_question(mem_store.get_artifact("p1-q1"), participant)
        assert len(entries) == 2
        assert provider.call_count == 1
        stored = mem_store.list_kind("implicit_domain_knowledge")
        assert len(stored) == 2
        assert all(e.source_question_ids == ["p1-q1"] for e in stored)
        assert all(e.scope == Scope.PROJECT and e.scope_id == "proj" for e in stored)
        assert mem_store.get_artifact("p1-q1").knowledge_processed is True
        assert mem_store.query_unprocessed_edits("proj") == []

    def test_second_invocation_rejected(self, mem_store):
        _, participant, _, _ = seed_world(mem_store)
        engine, _ = build_engine(mem_store, ["[]"])
        artifact = mem_store.get_artifact("p1-q1")
        engine.extract_for_question(artifact, participant)
        with pytest.raises(ContractViolationError):
            engine.extract_for_question(mem_store.get_artifact("p1-q1"), participant)

    def test_gateway_failure_leaves_artifact_unprocessed(self, mem_store):
        _, participant, _, _ = seed_world(mem_store)
        ledger = EditLedger(mem_store)
        artifact = mem_store.get_artifact("p1-q1")
        ledger.record_edit(
            "p1-q1", EditType.DIRECT_EDIT, "question", artifact.current_question, "changed"
        )

        class Exploding:
            def complete(self, request):
                raise GatewayRetryableError("downstream down")

        engine = KnowledgeEngine(mem_store, Gateway(Exploding(), store=mem_store), Config())
        with pytest.raises(GatewayRetryableError):
            engine.extract_for_question(mem_store.get_artifact("p1-q1"), participant)
        assert mem_store.get_artifact("p1-q1").knowledge_processed is False
        assert len(mem_store.query_unprocessed_edits("proj")) == 1

    def test_lost_claim_persists_nothing(self, mem_store):
        # Another extractor marks the artifact processed while our gateway
        # call is in flight; the CAS-first commit must drop our results.
        _, participant, _, _ = seed_world(mem_store)
        ledger = EditLedger(mem_store)
        artifact = mem_store.get_artifact("p1-q1")
        ledger.record_edit(
            "p1-q1", EditType.DIRECT_EDIT, "question", artifact.current_question, "changed"
        )

        class FlippingProvider:
            def __init__(self, store):
                self.store = store

            def complete(self, request):
                self.store.set_artifact_knowledge_processed(
                    "p1-q1", expected=False, value=True
                )
                from editloop.gateway import CompletionResponse

                return CompletionResponse(GOLDEN_TWO, 1, 1, 0)

        engine = KnowledgeEngine(
            mem_store, Gateway(FlippingProvider(mem_store), store=mem_store), Config()
        )
        result = engine.extract_for_question(mem_store.get_artifact("p1-q1"), participant)
        assert result == []
        assert mem_store.list_kind("implicit_domain_knowledge") == []

    def test_duplicates_dropped(self, mem_store):
        _, participant, _, _ = seed_world(mem_store)
        mem_store.put(entry(77, "Keep insights actionable for future drafting."))
        ledger = EditLedger(mem_store)
        artifact = mem_store.get_artifact("p1-q1")
        ledger.record_edit(
            "p1-q1", EditType.DIRECT_EDIT, "question", artifact.current_question, "changed"
        )
        response = json.dumps(
            [
                {
                    "text": "Keep insights actionable for future drafting.",
                    "category": "methodological_refinements",
                },
                {"text": "A genuinely new one.", "category": "conceptual_depth_changes"},
            ]
        )
        engine, _ = build_engine(mem_store, [response])
        entries = engine.extract_for_question(mem_store.get_artifact("p1-q1"), participant)
        assert [e.text for e in entries] == ["A genuinely new one."]


class TestExtractionPass:
    def _edit_artifact(self, store, ledger, artifact_id, suffix="!"):
        artifact = store.get_artifact(artifact_id)
        ledger.record_edit(
            artifact_id,
            EditType.DIRECT_EDIT,
            "question",
            artifact.current_question,
            artifact.current_question + suffix,
        )

    def test_pass_is_idempotent(self, mem_store):
        seed_world(mem_store)
        ledger = EditLedger(mem_store)
        self._edit_artifact(mem_store, ledger, "p1-q1")
        self._edit_artifact(mem_store, ledger, "p1-q2")
        script = [
            json.dumps([{"text": "First insight.", "category": "conceptual_depth_changes"}]),
            json.dumps([{"text": "Second insight.", "category": "methodological_refinements"}]),
        ]
        engine, provider = build_engine(mem_store, script)
        first = engine.extraction_pass("proj")
        assert first.entries_added == 2
        assert provider.call_count == 2

        second = engine.extraction_pass("proj")
        assert second.entries_added == 0
        assert provider.call_count == 2  # no further gateway calls
        assert len(mem_store.list_kind("implicit_domain_knowledge")) == 2

    def test_cardinality_bound(self, mem_store):
        seed_world(mem_store)
        ledger = EditLedger(mem_store)
        self._edit_artifact(mem_store, ledger, "p1-q1")
        engine, _ = build_engine(
            mem_store,
            [
                json.dumps(
                    [
                        {"text": f"Insight {i}.", "category": "conceptual_depth_changes"}
                        for i in range(3)
                    ]
                )
            ],
        )
        summary = engine.extraction_pass("proj")
        assert summary.entries_added <= 3

    def test_zero_distance_artifacts_closed_without_calls(self, mem_store):
        seed_world(mem_store)
        ledger = EditLedger(mem_store)
        artifact = mem_store.get_artifact("p1-q3")
        # Rating-only activity: unprocessed edit but all distances zero.
        ledger.record_edit("p1-q3", EditType.RATING, "quality_rating", "", "5")
        engine, provider = build_engine(mem_store, ["never"])
        summary = engine.extraction_pass("proj")
        assert provider.call_count == 0
        assert summary.artifacts_seen == 1 and summary.entries_added == 0
        assert mem_store.get_artifact("p1-q3").knowledge_processed is True

    def test_deleted_artifact_still_extracted(self, mem_store):
        seed_world(mem_store)
        ledger = EditLedger(mem_store)
        self._edit_artifact(mem_store, ledger, "p1-q2", suffix=" refined")
        ledger.record_edit("p1-q2", EditType.DELETE, "deleted", "false", "true")
        engine, provider = build_engine(
            mem_store,
            [json.dumps([{"text": "From a deleted one.", "category": "conceptual_depth_changes"}])],
        )
        summary = engine.extraction_pass("proj")
        assert provider.call_count == 1
        assert summary.entries_added == 1
