#include "mdmvar/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mdmvar/error.hpp"

namespace mdmvar {

bool Vocab::is_delimiter(TokenId id) const noexcept {
    return std::find(delimiter_ids.begin(), delimiter_ids.end(), id) != delimiter_ids.end();
}

bool Vocab::is_syntax(TokenId id) const noexcept {
    return std::find(syntax_ids.begin(), syntax_ids.end(), id) != syntax_ids.end();
}

void Vocab::validate() const {
    require(size >= first_ordinary() + 2, "vocab size must leave at least two ordinary ids");
    require(!delimiter_ids.empty() && !syntax_ids.empty(), "vocab needs delimiter and syntax ids");
    for (TokenId d : delimiter_ids) {
        require(d != mask_id && !is_syntax(d) && !is_ordinary(d), "delimiter ids overlap");
    }
    for (TokenId s : syntax_ids) {
        require(s != mask_id && !is_ordinary(s), "syntax ids overlap");
    }
    require(!is_ordinary(mask_id), "mask id overlaps ordinary ids");
}

EligibilityMode parse_eligibility(std::string_view name) {
    if (name == "pretrain") return EligibilityMode::pretrain;
    if (name == "sft") return EligibilityMode::sft;
    if (name == "syrm") return EligibilityMode::syrm;
    throw ValidationError("unknown eligibility mode: " + std::string(name));
}

std::string_view to_string(EligibilityMode mode) noexcept {
    switch (mode) {
        case EligibilityMode::pretrain: return "pretrain";
        case EligibilityMode::sft: return "sft";
        case EligibilityMode::syrm: return "syrm";
    }
    return "?";
}

namespace {
// The chain step is 1 + (second prompt token mod kStepChoices).
constexpr int kStepChoices = 2;
}  // namespace

TokenSeq generate_sequence(const Vocab& vocab, int seq_len, const RngStream& stream,
                           std::uint64_t index) {
    require(seq_len >= 8, "generate_corpus: seq_len must be >= 8");
    RngStream rng = stream.derive("seq", index);

    const int k_ord = vocab.num_ordinary();
    const TokenId base = vocab.first_ordinary();
    auto ordinary = [&] { return static_cast<TokenId>(base + rng.below(k_ord)); };

    TokenSeq seq;
    seq.prompt_len = seq_len / 2;
    seq.tokens.resize(seq_len);
    for (int i = 0; i < seq.prompt_len; ++i) seq.tokens[i] = ordinary();

    // 2..4 syntax tokens at distinct prompt slots after the two seed tokens.
    const int free_slots = seq.prompt_len - 2;
    const int n_syntax = std::min<int>(2 + static_cast<int>(rng.below(3)), free_slots);
    std::vector<int> slots(free_slots);
    std::iota(slots.begin(), slots.end(), 2);
    shuffle(slots, rng);
    slots.resize(n_syntax);
    std::sort(slots.begin(), slots.end());
    for (int pos : slots) {
        const auto& ids = vocab.syntax_ids;
        seq.tokens[pos] = ids[rng.below(ids.size())];
    }
    seq.syntax_positions = slots;

    const int start = seq.tokens[0] - base;
    const int step = 1 + (seq.tokens[1] - base) % kStepChoices;
    int value = (start + step) % k_ord;
    const int delim_pos = seq_len - 2;
    for (int i = seq.prompt_len; i < delim_pos; ++i) {
        seq.tokens[i] = base + value;
        value = (value + step) % k_ord;
    }
    seq.tokens[delim_pos] = vocab.delimiter_ids[rng.below(vocab.delimiter_ids.size())];
    seq.tokens[seq_len - 1] = base + value;
    seq.rare_positions = {delim_pos};
    return seq;
}

Corpus generate_corpus(const Vocab& vocab, int n, int seq_len, const RngStream& stream) {
    require(n >= 1, "generate_corpus: n must be >= 1");
    require(seq_len >= 8, "generate_corpus: seq_len must be >= 8");
    vocab.validate();
    Corpus corpus;
    corpus.reserve(n);
    for (int i = 0; i < n; ++i) corpus.push_back(generate_sequence(vocab, seq_len, stream, i));
    return corpus;
}

std::vector<int> eligibility(const TokenSeq& seq, EligibilityMode mode) {
    std::vector<int> out;
    switch (mode) {
        case EligibilityMode::pretrain:
            out.resize(seq.size());
            std::iota(out.begin(), out.end(), 0);
            break;
        case EligibilityMode::sft:
            for (int i = seq.prompt_len; i < seq.size(); ++i) out.push_back(i);
            break;
        case EligibilityMode::syrm:
            out = seq.syntax_positions;
            for (int i = seq.prompt_len; i < seq.size(); ++i) out.push_back(i);
            std::sort(out.begin(), out.end());
            out.erase(std::unique(out.begin(), out.end()), out.end());
            break;
    }
    return out;
}

void validate_sequence(const TokenSeq& seq, const Vocab& vocab) {
    require(seq.prompt_len >= 0 && seq.response_len() >= 1, "sequence needs a non-empty response");
    for (TokenId id : seq.tokens) {
        require(id >= 0 && id < vocab.size, "token id out of vocabulary range");
        require(id != vocab.mask_id, "clean sequence contains the mask id");
    }
    for (int p : seq.syntax_positions) {
        require(p >= 0 && p < seq.prompt_len, "syntax position outside prompt");
        require(vocab.is_syntax(seq.tokens[p]), "syntax position does not hold a syntax id");
    }
    for (int p : seq.rare_positions) {
        require(p >= seq.prompt_len && p < seq.size(), "rare position outside response");
        require(vocab.is_delimiter(seq.tokens[p]), "rare position does not hold a delimiter id");
    }
}

namespace {

template <typename T>
void write_list(std::ostream& out, const std::vector<T>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out << ' ';
        out << v[i];
    }
}

template <typename T>
std::vector<T> parse_list(const std::string& field) {
    std::vector<T> v;
    std::istringstream ss(field);
    T x;
    while (ss >> x) v.push_back(x);
    if (!ss.eof()) throw ValidationError("malformed id list: '" + field + "'");
    return v;
}

constexpr std::string_view kCorpusHeader = "tokens\tprompt_len\tsyntax_positions\trare_positions";

}  // namespace

void write_corpus(std::ostream& out, const Corpus& corpus) {
    out << kCorpusHeader << '\n';
    for (const auto& seq : corpus) {
        write_list(out, seq.tokens);
        out << '\t' << seq.prompt_len << '\t';
        write_list(out, seq.syntax_positions);
        out << '\t';
        write_list(out, seq.rare_positions);
        out << '\n';
    }
}

Corpus read_corpus(std::istream& in) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line == kCorpusHeader,
            "corpus file: missing header row");
    Corpus corpus;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            auto tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        require(fields.size() == 4, "corpus line " + std::to_string(lineno) + ": expected 4 fields");
        TokenSeq seq;
        seq.tokens = parse_list<TokenId>(fields[0]);
        try {
            seq.prompt_len = std::stoi(fields[1]);
        } catch (const std::exception&) {
            throw ValidationError("corpus line " + std::to_string(lineno) + ": bad prompt_len");
        }
        seq.syntax_positions = parse_list<int>(fields[2]);
        seq.rare_positions = parse_list<int>(fields[3]);
        require(seq.prompt_len >= 0 && seq.prompt_len < seq.size(),
                "corpus line " + std::to_string(lineno) + ": prompt_len out of range");
        corpus.push_back(std::move(seq));
    }
    return corpus;
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), "cannot write " + path.string());
    write_corpus(out, corpus);
}

Corpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot read " + path.string());
    return read_corpus(in);
}

}  // namespace mdmvar
