#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "pcmkit/ortho.hpp"

using namespace pcmkit;
using namespace pcmkit::ortho;

namespace {

// The eight rows of the variation table: base, variant, class.
struct Row {
  const char* base;
  const char* variant;
  VariationClass cls;
  const char* subtype;
};
const Row kTable[] = {
    {"carry", "karry", VariationClass::alternation, "c/k"},
    {"call", "coll", VariationClass::alternation, "a/o"},
    {"our", "awa", VariationClass::conversion, "ou/a"},
    {"your", "yor", VariationClass::conversion, "ou/o"},
    {"trouble", "trobol", VariationClass::transcription, "bl/bol"},
    {"whether", "weda", VariationClass::transcription, "er/a"},
    {"he", "e", VariationClass::deletion, "initial"},
    {"different", "difren", VariationClass::deletion, "medial"},
};

corpus::SentencePair eng_pcm(const std::string& e, const std::string& p) {
  corpus::SentencePair sp;
  sp.src = e;
  sp.tgt = p;
  sp.src_lang = corpus::LanguageTag("eng");
  sp.tgt_lang = corpus::LanguageTag("pcm");
  sp.source_name = "demo";
  return sp;
}

}  // namespace

TEST_CASE("builtin rules validate and cover every table row") {
  auto rs = builtin_rules();
  CHECK_NOTHROW(rs.validate());
  for (const auto& row : kTable) {
    CAPTURE(row.base);
    auto vs = token_variants(row.base, rs, 64, 1);
    CHECK(vs.contains(row.variant));
    auto cls = classify_pair(row.base, row.variant, rs);
    REQUIRE(cls.has_value());
    CHECK(cls->first == row.cls);
    CHECK(cls->second == row.subtype);
  }
}

TEST_CASE("apply_rule respects position classes and lists every occurrence") {
  VariationRule ck{VariationClass::alternation, "c/k", "c", "k", Position::any, false};
  CHECK(apply_rule("coco", ck) == std::vector<std::string>{"koco", "coko"});
  CHECK(apply_rule("dog", ck).empty());

  VariationRule h_init{VariationClass::deletion, "initial", "h", "", Position::initial, false};
  CHECK(apply_rule("he", h_init) == std::vector<std::string>{"e"});
  CHECK(apply_rule("the", h_init).empty());

  VariationRule er_fin{VariationClass::transcription, "er/a", "er", "a", Position::final, false};
  CHECK(apply_rule("better", er_fin) == std::vector<std::string>{"betta"});
  CHECK(apply_rule("very", er_fin).empty());

  VariationRule e_med{VariationClass::deletion, "medial", "e", "", Position::medial, false};
  // medial means strictly inside: the final e of "there" does not count
  CHECK(apply_rule("there", e_med) == std::vector<std::string>{"thre"});
  CHECK(apply_rule("eye", e_med).empty());

  VariationRule word{VariationClass::conversion, "ou/a", "our", "awa", Position::any, true};
  CHECK(apply_rule("our", word) == std::vector<std::string>{"awa"});
  CHECK(apply_rule("your", word).empty());  // whole word, not substring
}

TEST_CASE("rule validation rejects malformed rules") {
  VariationRule r{VariationClass::deletion, "x", "", "", Position::any, false};
  CHECK_THROWS_AS(r.validate(), InvalidArgument);
  r.pattern = "e";
  r.replacement = "x";
  CHECK_THROWS_AS(r.validate(), InvalidArgument);  // deletion with replacement

  RuleSet rs;
  rs.rules.push_back({VariationClass::alternation, "c/k", "c", "k", Position::any, false});
  rs.rules.push_back({VariationClass::conversion, "dup", "c", "k", Position::any, false});
  CHECK_THROWS_AS(rs.validate(), InvalidArgument);
}

TEST_CASE("token_variants is seeded, capped and records its rules") {
  auto rs = builtin_rules();

  SUBCASE("no matching rule gives an empty set") {
    auto vs = token_variants("xyz", rs, 8, 1);
    CHECK(vs.empty());
  }

  SUBCASE("base never appears and size respects the cap") {
    auto vs = token_variants("trouble", rs, 3, 7);
    CHECK(vs.variants.size() <= 3);
    for (const auto& v : vs.variants) CHECK(v != "trouble");
  }

  SUBCASE("same seed same output, different seed may reorder") {
    auto a = token_variants("trouble", rs, 64, 5);
    auto b = token_variants("trouble", rs, 64, 5);
    CHECK(a.variants == b.variants);
    CHECK(a.applied_rules == b.applied_rules);
  }

  SUBCASE("single-rule variants come before compositions") {
    auto vs = token_variants("trouble", rs, 64, 9);
    bool seen_composite = false;
    for (const auto& ids : vs.applied_rules) {
      if (ids.size() == 2) seen_composite = true;
      if (ids.size() == 1) CHECK(!seen_composite);
    }
    CHECK(seen_composite);  // trobol needs two rules, so composites exist
  }

  SUBCASE("recorded rules replay to the variant") {
    auto vs = token_variants("trouble", rs, 64, 3);
    REQUIRE(vs.variants.size() == vs.applied_rules.size());
    for (size_t i = 0; i < vs.variants.size(); ++i) {
      const auto& ids = vs.applied_rules[i];
      REQUIRE(!ids.empty());
      if (ids.size() == 1) {
        auto one = apply_rule("trouble", rs.rules[ids[0]]);
        CHECK(std::find(one.begin(), one.end(), vs.variants[i]) != one.end());
      } else {
        bool reachable = false;
        for (const auto& mid : apply_rule("trouble", rs.rules[ids[0]])) {
          auto two = apply_rule(mid, rs.rules[ids[1]]);
          if (std::find(two.begin(), two.end(), vs.variants[i]) != two.end()) reachable = true;
        }
        CHECK(reachable);
      }
    }
  }
}

TEST_CASE("classify_pair finds chains, respects order and rejects strangers") {
  auto rs = builtin_rules();
  CHECK(!classify_pair("cat", "cat", rs).has_value());
  CHECK(!classify_pair("cat", "dog", rs).has_value());

  // symmetric: variant first
  auto c = classify_pair("karry", "carry", rs);
  REQUIRE(c.has_value());
  CHECK(c->first == VariationClass::alternation);

  // the trouble/trobol chain must credit the transcription step, not the
  // ou/o conversion that also participates
  auto t = classify_pair("trobol", "trouble", rs);
  REQUIRE(t.has_value());
  CHECK(t->first == VariationClass::transcription);
  CHECK(t->second == "bl/bol");
}

TEST_CASE("normalize_token canonicalizes variants and is idempotent") {
  auto rs = builtin_rules();
  CHECK(normalize_token("karry", rs) == "carry");
  CHECK(normalize_token("carry", rs) == "carry");
  CHECK(normalize_token("difren", rs) == "different");
  CHECK(normalize_token("xyz", rs) == "xyz");

  SUBCASE("base and variant collapse together for invertible rows") {
    // deletion of initial h is unrecoverable without a word entry, so he/e
    // stays apart; every other row meets at one canonical form
    for (const auto& row : kTable) {
      if (std::string(row.base) == "he") continue;
      CAPTURE(row.base);
      CHECK(normalize_token(row.base, rs) == normalize_token(row.variant, rs));
    }
  }

  SUBCASE("idempotent over the whole test lexicon") {
    std::vector<std::string> lexicon = {"make", "wetin", "dey", "una", "sabi", "abeg",
                                        "troubol", "yor", "awa", "weda", "difren"};
    for (const auto& row : kTable) {
      lexicon.push_back(row.base);
      lexicon.push_back(row.variant);
    }
    for (const auto& t : lexicon) {
      CAPTURE(t);
      CHECK(normalize_token(normalize_token(t, rs), rs) == normalize_token(t, rs));
    }
  }
}

TEST_CASE("rule sets round-trip through jsonl") {
  auto rs = builtin_rules();
  auto path = (std::filesystem::temp_directory_path() / "pcmkit_rules.jsonl").string();
  save_rules(rs, path);
  auto back = load_rules(path);
  REQUIRE(back.rules.size() == rs.rules.size());
  for (size_t i = 0; i < rs.rules.size(); ++i) {
    CHECK(back.rules[i].cls == rs.rules[i].cls);
    CHECK(back.rules[i].subtype == rs.rules[i].subtype);
    CHECK(back.rules[i].pattern == rs.rules[i].pattern);
    CHECK(back.rules[i].replacement == rs.rules[i].replacement);
    CHECK(back.rules[i].position == rs.rules[i].position);
    CHECK(back.rules[i].whole_word == rs.rules[i].whole_word);
  }

  SUBCASE("kind defaults to rule when absent") {
    write_file(path, "{\"class\":\"alternation\",\"subtype\":\"c/k\",\"pattern\":\"c\","
                     "\"replacement\":\"k\",\"position\":\"any\"}\n");
    auto one = load_rules(path);
    REQUIRE(one.rules.size() == 1);
    CHECK(!one.rules[0].whole_word);
  }

  SUBCASE("malformed rule names the line") {
    write_file(path, "{\"class\":\"alternation\"}\n");
    CHECK_THROWS_AS(load_rules(path), FormatError);
  }
}

TEST_CASE("augment_corpus adds varied copies of the pidgin side only") {
  auto rs = builtin_rules();
  corpus::ParallelCorpus c;
  c.langs = {corpus::LanguageTag("eng"), corpus::LanguageTag("pcm")};
  c.pairs.push_back(eng_pcm("I carry it", "carry am"));

  SUBCASE("rate zero is the identity") {
    auto out = augment_corpus(c, rs, 0.0, 1);
    CHECK(out.size() == c.size());
  }

  SUBCASE("rate one duplicates the pair with a changed pidgin side") {
    auto out = augment_corpus(c, rs, 1.0, 1);
    REQUIRE(out.size() == 2);
    CHECK(out.pairs[0].tgt == "carry am");
    CHECK(out.pairs[1].tgt != "carry am");
    CHECK(out.pairs[1].src == "I carry it");  // english side untouched
    CHECK(out.pairs[1].source_name == "demo+ortho");
    CHECK(out.pairs[1].origin == corpus::Origin::real);
  }

  SUBCASE("same seed reproduces the augmentation") {
    auto a = augment_corpus(c, rs, 1.0, 9);
    auto b = augment_corpus(c, rs, 1.0, 9);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.pairs[i].tgt == b.pairs[i].tgt);
  }

  SUBCASE("pcm on the source side is augmented there") {
    corpus::ParallelCorpus rev;
    rev.langs = {corpus::LanguageTag("eng"), corpus::LanguageTag("pcm")};
    corpus::SentencePair sp;
    sp.src = "carry am";
    sp.tgt = "I carry it";
    sp.src_lang = corpus::LanguageTag("pcm");
    sp.tgt_lang = corpus::LanguageTag("eng");
    rev.pairs.push_back(sp);
    auto out = augment_corpus(rev, rs, 1.0, 1);
    REQUIRE(out.size() == 2);
    CHECK(out.pairs[1].src != "carry am");
    CHECK(out.pairs[1].tgt == "I carry it");
  }

  SUBCASE("sentence-initial capitals survive augmentation") {
    corpus::ParallelCorpus cap;
    cap.langs = c.langs;
    cap.pairs.push_back(eng_pcm("Carry it", "Carry am"));
    auto out = augment_corpus(cap, rs, 1.0, 2);
    REQUIRE(out.size() == 2);
    const auto& aug = out.pairs[1].tgt;
    CHECK(aug[0] >= 'A');
    CHECK(aug[0] <= 'Z');
  }

  SUBCASE("tokens with no matching rule leave the sentence unaugmented") {
    corpus::ParallelCorpus none;
    none.langs = c.langs;
    none.pairs.push_back(eng_pcm("x", "zzz zzz"));
    auto out = augment_corpus(none, rs, 1.0, 1);
    CHECK(out.size() == 1);
  }
}

TEST_CASE("monolingual augmentation appends varied sentences") {
  auto rs = builtin_rules();
  corpus::MonoCorpus m;
  m.lang = corpus::LanguageTag("pcm");
  m.name = "mono";
  m.sentences = {"carry am", "how you dey"};
  auto out = augment_corpus(m, rs, 1.0, 4);
  CHECK(out.size() > m.size());
  CHECK(out.name == "mono+ortho");
  for (size_t i = 0; i < m.size(); ++i) CHECK(out.sentences[i] == m.sentences[i]);
  auto again = augment_corpus(m, rs, 1.0, 4);
  CHECK(out.sentences == again.sentences);
}
