import pytest

from rolefuse.conll import (
    BioFormatError,
    TaggedSequence,
    from_bio,
    read_conll,
    to_bio,
    tokenize,
    write_conll,
)
from rolefuse.data_model import MemeRecord, Role
from rolefuse.synthetic import make_synthetic_corpus


def rec(text, entities, mid="m1"):
    return MemeRecord(id=mid, image_ref="i.png", ocr_text=text,
                      annotations=tuple(entities))


class TestTokenize:
    def test_punctuation_detached(self):
        assert tokenize("Who did this?") == ["Who", "did", "this", "?"]

    def test_empty(self):
        assert tokenize("") == []

    def test_internal_hyphen_kept(self):
        assert tokenize("COVID-19 vaccine") == ["COVID-19", "vaccine"]

    def test_leading_and_multiple(self):
        assert tokenize('"wow!"') == ['"', "wow", "!", '"']

    def test_apostrophe_internal(self):
        assert tokenize("don't stop") == ["don't", "stop"]


class TestTaggedSequence:
    def test_length_mismatch(self):
        with pytest.raises(BioFormatError):
            TaggedSequence(("a", "b"), ("O",))

    def test_dangling_i_rejected(self):
        with pytest.raises(BioFormatError):
            TaggedSequence(("a", "b"), ("O", "I-HERO"))

    def test_role_switch_rejected(self):
        with pytest.raises(BioFormatError):
            TaggedSequence(("a", "b"), ("B-HERO", "I-VILLAIN"))

    def test_valid(self):
        TaggedSequence(("a", "b", "c"), ("B-HERO", "I-HERO", "O"))


class TestToBio:
    def test_explicit_entity_tagged(self):
        r = rec("I love Batman so much", [("Batman", Role.HERO)])
        seq = to_bio(r)
        assert seq.tokens == ("I", "love", "Batman", "so", "much")
        assert seq.tags == ("O", "O", "B-HERO", "O", "O")

    def test_multi_token_entity(self):
        r = rec("blame Joe Biden now", [("Joe Biden", Role.VILLAIN)])
        seq = to_bio(r)
        assert seq.tags == ("O", "B-VILLAIN", "I-VILLAIN", "O")

    def test_implicit_entity_appended(self):
        r = rec("no mention here", [("Salman Khan", Role.VICTIM)])
        seq = to_bio(r)
        assert seq.tokens == ("no", "mention", "here", "Salman", "Khan")
        assert seq.tags == ("O", "O", "O", "B-VICTIM", "I-VICTIM")

    def test_case_insensitive_match(self):
        r = rec("PUTIN strikes", [("Putin", Role.VILLAIN)])
        assert to_bio(r).tags == ("B-VILLAIN", "O")

    def test_no_entities_all_o(self):
        seq = to_bio(rec("just some text", []))
        assert set(seq.tags) == {"O"}

    def test_longest_entity_wins(self):
        r = rec("Vladimir Putin spoke", [("Putin", Role.OTHER),
                                         ("Vladimir Putin", Role.VILLAIN)])
        seq = to_bio(r)
        # the longer entity takes the span; the shorter one is appended
        assert seq.tags[:3] == ("B-VILLAIN", "I-VILLAIN", "O")
        assert seq.tokens[3:] == ("Putin",)
        assert seq.tags[3:] == ("B-OTHER",)

    def test_first_occurrence_only(self):
        r = rec("Putin and Putin again", [("Putin", Role.VILLAIN)])
        seq = to_bio(r)
        assert seq.tags == ("B-VILLAIN", "O", "O", "O")

    def test_entities_only_mode(self):
        r = rec("whatever text", [("Joe Biden", Role.HERO), ("Fauci", Role.VICTIM)])
        seq = to_bio(r, mode="entities_only")
        assert seq.tokens == ("Joe", "Biden", "Fauci")
        assert seq.tags == ("B-HERO", "I-HERO", "B-VICTIM")

    def test_entities_only_length(self):
        r = rec("t", [("a b c", Role.OTHER), ("d", Role.HERO)])
        seq = to_bio(r, mode="entities_only")
        assert len(seq.tokens) == 4

    def test_empty_text_no_entities(self):
        seq = to_bio(rec("", []))
        assert seq.tokens == ()

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            to_bio(rec("x", []), mode="bogus")


class TestFromBio:
    def test_simple_span(self):
        seq = TaggedSequence(("a", "b", "c"), ("B-HERO", "I-HERO", "O"))
        assert from_bio(seq) == [(("a", "b"), Role.HERO)]

    def test_all_o(self):
        seq = TaggedSequence(("a", "b"), ("O", "O"))
        assert from_bio(seq) == []

    def test_adjacent_spans(self):
        seq = TaggedSequence(("a", "b"), ("B-HERO", "B-VILLAIN"))
        assert from_bio(seq) == [(("a",), Role.HERO), (("b",), Role.VILLAIN)]


class TestRoundTrip:
    @pytest.mark.parametrize("mode", ["all_tokens", "entities_only"])
    def test_corpus_round_trip(self, mode):
        corpus = make_synthetic_corpus(200, seed=5)
        for record in corpus:
            seq = to_bio(record, mode=mode)
            got = sorted(
                (tuple(t.lower() for t in toks), role.value)
                for toks, role in from_bio(seq)
            )
            want = sorted(
                (tuple(t.lower() for t in tokenize(name)), role.value)
                for name, role in record.annotations
            )
            assert got == want, record.id

    def test_bio_wellformed_for_corpus(self):
        # TaggedSequence validates in __post_init__; constructing is the check
        for record in make_synthetic_corpus(100, seed=9):
            to_bio(record)


class TestConllIO:
    def test_round_trip(self, tmp_path):
        seqs = [
            TaggedSequence(("a", "b"), ("B-HERO", "I-HERO"), "m1"),
            TaggedSequence(("c",), ("O",), "m2", (("NN",),)),
        ]
        p = tmp_path / "x.conll"
        write_conll(seqs, p)
        assert read_conll(p) == seqs

    def test_bit_exact_rewrite(self, tmp_path):
        seqs = [TaggedSequence(("a", "!"), ("O", "O"), "m1")]
        p1, p2 = tmp_path / "a.conll", tmp_path / "b.conll"
        write_conll(seqs, p1)
        write_conll(read_conll(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "bad.conll"
        p.write_text("justonetoken\n", encoding="utf-8")
        with pytest.raises(BioFormatError, match="bad.conll:1"):
            read_conll(p)
