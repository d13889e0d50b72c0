#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "mdmvar/corpus.hpp"
#include "mdmvar/error.hpp"

using namespace mdmvar;

namespace {

bool same(const TokenSeq& a, const TokenSeq& b) {
    return a.tokens == b.tokens && a.prompt_len == b.prompt_len &&
           a.syntax_positions == b.syntax_positions && a.rare_positions == b.rare_positions;
}

}  // namespace

TEST_CASE("generation is deterministic") {
    Vocab v;
    RngStream s = RngStream(1234).derive("corpus", 0);
    Corpus a = generate_corpus(v, 2, 32, s);
    Corpus b = generate_corpus(v, 2, 32, s);
    REQUIRE(a.size() == 2);
    for (int i = 0; i < 2; ++i) CHECK(same(a[i], b[i]));
    // Sequence i depends only on (stream, i).
    CHECK(same(generate_sequence(v, 32, s, 1), a[1]));
}

TEST_CASE("every sequence has rare and syntax positions and no mask token") {
    Vocab v;
    Corpus c = generate_corpus(v, 100, 32, RngStream(9));
    for (const auto& seq : c) {
        CHECK(seq.size() == 32);
        CHECK(!seq.rare_positions.empty());
        CHECK(seq.syntax_positions.size() >= 2);
        CHECK(seq.syntax_positions.size() <= 4);
        CHECK(seq.response_len() >= 1);
        for (TokenId t : seq.tokens) CHECK(t != v.mask_id);
        for (int p : seq.rare_positions) CHECK(v.is_delimiter(seq.tokens[p]));
        for (int p : seq.syntax_positions) CHECK(v.is_syntax(seq.tokens[p]));
        CHECK_NOTHROW(validate_sequence(seq, v));
    }
}

TEST_CASE("response follows the modular chain") {
    Vocab v;
    const int K = v.num_ordinary();
    const TokenId o = v.first_ordinary();
    Corpus c = generate_corpus(v, 50, 32, RngStream(21));
    for (const auto& seq : c) {
        const int p0 = seq.tokens[0] - o, p1 = seq.tokens[1] - o;
        REQUIRE(v.is_ordinary(seq.tokens[0]));
        REQUIRE(v.is_ordinary(seq.tokens[1]));
        const int step = 1 + p1 % 2;
        int expect = (p0 + step) % K;
        const int delim = seq.rare_positions.front();
        for (int i = seq.prompt_len; i < delim; ++i) {
            CHECK(seq.tokens[i] - o == expect);
            expect = (expect + step) % K;
        }
        REQUIRE(delim + 1 < seq.size());
        CHECK(seq.tokens[delim + 1] - o == expect);
    }
}

TEST_CASE("eligibility modes") {
    TokenSeq seq;
    seq.tokens.assign(16, 6);
    seq.prompt_len = 10;
    seq.syntax_positions = {2, 5};
    seq.rare_positions = {14};
    auto sft = eligibility(seq, EligibilityMode::sft);
    CHECK(sft == std::vector<int>{10, 11, 12, 13, 14, 15});
    auto syrm = eligibility(seq, EligibilityMode::syrm);
    CHECK(syrm == std::vector<int>{2, 5, 10, 11, 12, 13, 14, 15});
    auto pre = eligibility(seq, EligibilityMode::pretrain);
    REQUIRE(pre.size() == 16);
    for (int i = 0; i < 16; ++i) CHECK(pre[i] == i);
}

TEST_CASE("eligibility names") {
    CHECK(parse_eligibility("sft") == EligibilityMode::sft);
    CHECK(parse_eligibility("syrm") == EligibilityMode::syrm);
    CHECK(parse_eligibility("pretrain") == EligibilityMode::pretrain);
    CHECK(to_string(EligibilityMode::syrm) == "syrm");
    CHECK_THROWS_AS((void)parse_eligibility("bogus"), ValidationError);
}

TEST_CASE("vocab validation") {
    Vocab v;
    CHECK_NOTHROW(v.validate());
    Vocab overlap = v;
    overlap.syntax_ids.push_back(1);
    CHECK_THROWS_AS(overlap.validate(), ValidationError);
    Vocab tiny = v;
    tiny.size = 6;
    CHECK_THROWS_AS(tiny.validate(), ValidationError);
}

TEST_CASE("sequence validation catches broken invariants") {
    Vocab v;
    TokenSeq seq = generate_sequence(v, 32, RngStream(4), 0);
    TokenSeq masked = seq;
    masked.tokens[0] = v.mask_id;
    CHECK_THROWS_AS(validate_sequence(masked, v), ValidationError);
    TokenSeq bad_rare = seq;
    bad_rare.rare_positions = {seq.prompt_len};
    CHECK_THROWS_AS(validate_sequence(bad_rare, v), ValidationError);
}

TEST_CASE("corpus text round trip") {
    Vocab v;
    Corpus c = generate_corpus(v, 20, 32, RngStream(77));
    std::stringstream ss;
    write_corpus(ss, c);
    Corpus back = read_corpus(ss);
    REQUIRE(back.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(same(back[i], c[i]));

    auto path = std::filesystem::temp_directory_path() / "mdmvar_corpus_test.tsv";
    save_corpus(path, c);
    Corpus loaded = load_corpus(path);
    std::filesystem::remove(path);
    REQUIRE(loaded.size() == c.size());
    CHECK(same(loaded[3], c[3]));
}

TEST_CASE("malformed corpus lines are rejected") {
    std::stringstream bad("tokens\tprompt_len\tsyntax_positions\trare_positions\n6 7 8\tx\t\t\n");
    CHECK_THROWS_AS((void)read_corpus(bad), ValidationError);
    std::stringstream range("tokens\tprompt_len\tsyntax_positions\trare_positions\n6 7 8\t5\t\t\n");
    CHECK_THROWS_AS((void)read_corpus(range), ValidationError);
}
