import sys

import numpy as np
import pytest

from rolefuse.augment import (
    AugmentError,
    AugmentPolicy,
    ProviderError,
    SubstitutionProvider,
    balance,
    contextual_substitute,
    load_lexicon,
    substitute,
)
from rolefuse.data_model import Role, EntityInstance

NO_STOP = frozenset()


def inst(mid, entity, text, role):
    return EntityInstance(meme_id=mid, entity_name=entity, ocr_text=text,
                          image_ref=f"{mid}.png", role=role)


ECHO_PROVIDER = [
    sys.executable, "-c",
    "import sys, json\n"
    "for line in sys.stdin:\n"
    "    req = json.loads(line)\n"
    "    print(json.dumps({'text': req['text']}))\n"
    "    sys.stdout.flush()\n",
]

UPPER_PROVIDER = [
    sys.executable, "-c",
    "import sys, json\n"
    "for line in sys.stdin:\n"
    "    req = json.loads(line)\n"
    "    print(json.dumps({'text': req['text'].upper()}))\n"
    "    sys.stdout.flush()\n",
]

BROKEN_PROVIDER = [
    sys.executable, "-c",
    "import sys\n"
    "sys.stdin.readline()\n"
    "print('this is not json')\n"
    "sys.stdout.flush()\n",
]


class TestSubstitute:
    def test_empty_lexicon_unchanged(self):
        rng = np.random.default_rng(0)
        text = "the bad man did a bad thing"
        assert substitute(text, "man", {}, 1.0, rng, NO_STOP) == text

    def test_forced_substitution(self):
        rng = np.random.default_rng(0)
        lex = {"bad": ["evil"]}
        out = substitute("bad man", "man", lex, 1.0, rng, NO_STOP)
        assert out == "evil man"

    def test_entity_never_touched(self):
        lex = {"man": ["person"], "bad": ["evil"]}
        for seed in range(1000):
            rng = np.random.default_rng(seed)
            out = substitute("bad man here", "man", lex, 1.0, rng, NO_STOP)
            assert "man" in out.split()

    def test_multiword_entity_protected(self):
        lex = {"joe": ["joseph"], "biden": ["b"]}
        rng = np.random.default_rng(1)
        out = substitute("praise Joe Biden", "Joe Biden", lex, 1.0, rng, NO_STOP)
        assert out == "praise Joe Biden"

    def test_p_zero_like_behavior(self):
        # p must be positive; the smallest draws still rarely fire
        rng = np.random.default_rng(2)
        text = "bad bad bad"
        out = substitute(text, "nobody", {"bad": ["evil"]}, 1e-12, rng, NO_STOP)
        assert out == text

    def test_whitespace_preserved(self):
        rng = np.random.default_rng(3)
        out = substitute("bad   man!", "nobody", {"bad": ["evil"]}, 1.0, rng, NO_STOP)
        assert out == "evil   man!"

    def test_edge_punctuation_preserved(self):
        rng = np.random.default_rng(4)
        out = substitute('"bad"', "nobody", {"bad": ["evil"]}, 1.0, rng, NO_STOP)
        assert out == '"evil"'

    def test_stopword_skipped(self):
        rng = np.random.default_rng(5)
        out = substitute("the end", "nobody", {"the": ["a"]}, 1.0, rng,
                         frozenset({"the"}))
        assert out == "the end"

    def test_case_insensitive_lookup(self):
        rng = np.random.default_rng(6)
        out = substitute("BAD man", "man", {"bad": ["evil"]}, 1.0, rng, NO_STOP)
        assert out == "evil man"


class TestLexiconLoading:
    def test_tsv_parse(self, tmp_path):
        p = tmp_path / "lex.tsv"
        p.write_text("# comment\nbad\tevil,wicked\n\ngood\tgreat\n", encoding="utf-8")
        lex = load_lexicon(p)
        assert lex == {"bad": ["evil", "wicked"], "good": ["great"]}

    def test_self_synonym_dropped(self, tmp_path):
        p = tmp_path / "lex.tsv"
        p.write_text("bad\tBad,evil\n", encoding="utf-8")
        assert load_lexicon(p) == {"bad": ["evil"]}

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "lex.tsv"
        p.write_text("no-tab-here\n", encoding="utf-8")
        with pytest.raises(AugmentError, match="lex.tsv:1"):
            load_lexicon(p)

    def test_empty_synonyms(self, tmp_path):
        p = tmp_path / "lex.tsv"
        p.write_text("bad\t\n", encoding="utf-8")
        with pytest.raises(AugmentError):
            load_lexicon(p)


class TestPolicy:
    def test_defaults(self):
        policy = AugmentPolicy()
        assert policy.copies[Role.HERO] == 6
        assert policy.copies[Role.VILLAIN] == 2
        assert policy.copies[Role.VICTIM] == 3
        assert policy.copies[Role.OTHER] == 0
        assert policy.p == 0.3

    def test_negative_copies_rejected(self):
        with pytest.raises(AugmentError):
            AugmentPolicy(copies={Role.HERO: -1})

    def test_bad_fraction(self):
        with pytest.raises(AugmentError):
            AugmentPolicy(p=0.0)
        with pytest.raises(AugmentError):
            AugmentPolicy(p=1.5)


class TestBalance:
    def sample(self):
        return [
            inst("m1", "Batman", "praise Batman the bad hero", Role.HERO),
            inst("m2", "Putin", "blame Putin for this", Role.VILLAIN),
            inst("m3", "Fauci", "save Fauci now", Role.VICTIM),
            inst("m4", "someone", "someone was here", Role.OTHER),
        ]

    def test_output_counts(self):
        out = balance(self.sample(), {"bad": ["evil"]}, AugmentPolicy())
        roles = [i.role for i in out]
        assert roles.count(Role.HERO) == 7
        assert roles.count(Role.VILLAIN) == 3
        assert roles.count(Role.VICTIM) == 4
        assert roles.count(Role.OTHER) == 1
        assert len(out) == 15

    def test_originals_first_and_unchanged(self):
        src = self.sample()
        out = balance(src, {}, AugmentPolicy())
        assert out[0] == src[0]
        originals = [i for i in out if not i.augmented]
        assert originals == src

    def test_copy_metadata(self):
        out = balance(self.sample(), {}, AugmentPolicy())
        copies = [i for i in out if i.augmented]
        assert all(c.source_meme_id for c in copies)
        assert {c.meme_id for c in copies if c.entity_name == "Batman"} == {
            f"m1~aug{k}" for k in range(6)
        }

    def test_image_key_resolves_to_source(self):
        out = balance(self.sample(), {}, AugmentPolicy())
        copy = next(i for i in out if i.augmented)
        assert copy.image_key == "m1"

    def test_deterministic(self):
        lex = {"bad": ["evil", "wicked"], "blame": ["fault", "accuse"]}
        a = balance(self.sample(), lex, AugmentPolicy(p=1.0, seed=4))
        b = balance(self.sample(), lex, AugmentPolicy(p=1.0, seed=4))
        assert a == b

    def test_seed_changes_copies(self):
        lex = {"praise": ["laud", "honor", "salute"],
               "hero": ["champion", "star", "idol"]}
        a = balance(self.sample(), lex, AugmentPolicy(p=1.0, seed=0))
        b = balance(self.sample(), lex, AugmentPolicy(p=1.0, seed=1))
        assert [i.ocr_text for i in a] != [i.ocr_text for i in b]

    def test_entity_preserved_in_copies(self):
        lex = {"praise": ["laud"], "batman": ["batperson"], "bad": ["evil"]}
        out = balance(self.sample(), lex, AugmentPolicy(p=1.0))
        for copy in out:
            if copy.entity_name == "Batman":
                assert "Batman" in copy.ocr_text

    def test_unknown_mode(self):
        with pytest.raises(AugmentError):
            balance(self.sample(), {}, AugmentPolicy(), mode="bogus")

    def test_contextual_needs_provider(self):
        with pytest.raises(AugmentError, match="provider"):
            balance(self.sample(), {}, AugmentPolicy(), mode="contextual")


class TestProvider:
    def test_echo_round_trip(self):
        with SubstitutionProvider(ECHO_PROVIDER) as prov:
            assert prov.request("hello there", "there", 0.3, 1) == "hello there"

    def test_contextual_protects_entity(self):
        with SubstitutionProvider(UPPER_PROVIDER) as prov:
            out = contextual_substitute("blame putin now", "putin", prov, 0.3, 0)
        assert out == "BLAME putin NOW"

    def test_contextual_without_protected_span(self):
        with SubstitutionProvider(UPPER_PROVIDER) as prov:
            out = contextual_substitute("blame him now", "nobody here", prov, 0.3, 0)
        assert out == "BLAME HIM NOW"

    def test_malformed_response(self):
        with SubstitutionProvider(BROKEN_PROVIDER) as prov:
            with pytest.raises(ProviderError, match="malformed"):
                prov.request("x", "y", 0.3, 0)

    def test_missing_command(self):
        with pytest.raises(ProviderError):
            SubstitutionProvider(["/nonexistent/provider-binary"])

    def test_dropped_entity_rejected(self):
        dropper = [
            sys.executable, "-c",
            "import sys, json\n"
            "for line in sys.stdin:\n"
            "    print(json.dumps({'text': 'gone'}))\n"
            "    sys.stdout.flush()\n",
        ]
        with SubstitutionProvider(dropper) as prov:
            with pytest.raises(ProviderError, match="entity"):
                contextual_substitute("blame putin today", "putin", prov, 0.3, 0)

    def test_balance_mix_mode(self):
        sample = [inst("m1", "Batman", "praise Batman loudly", Role.HERO)]
        with SubstitutionProvider(UPPER_PROVIDER) as prov:
            out = balance(sample, {"praise": ["laud"]},
                          AugmentPolicy(p=1.0), mode="mix", provider=prov)
        copies = [i for i in out if i.augmented]
        assert len(copies) == 6
        # odd copy indices go through the provider, even ones the lexicon
        assert copies[1].ocr_text == "PRAISE Batman LOUDLY"
        assert copies[0].ocr_text == "laud Batman loudly"

    def test_balance_contextual_mode(self):
        sample = [inst("m1", "Fauci", "save Fauci now", Role.VICTIM)]
        with SubstitutionProvider(ECHO_PROVIDER) as prov:
            out = balance(sample, {}, AugmentPolicy(), mode="contextual",
                          provider=prov)
        assert len(out) == 4
        assert all(i.ocr_text == "save Fauci now" for i in out)
