#include "revlab/data.hpp"

#include <fstream>

#include "json.hpp"

namespace revlab {

int Vocab::pair_of(int id) {
    if (is_lower(id)) {
        return id - lower_base + upper_base;
    }
    if (is_upper(id)) {
        return id - upper_base + lower_base;
    }
    throw ContractError("contract-violation", "pair_of: not a letter token");
}

char Vocab::decode(int id) {
    if (is_lower(id)) {
        return static_cast<char>('a' + id - lower_base);
    }
    if (is_upper(id)) {
        return static_cast<char>('A' + id - upper_base);
    }
    if (id == pad) {
        return '0';
    }
    if (id == mask) {
        return '_';
    }
    throw ContractError("contract-violation", "decode: invalid token id");
}

int Vocab::encode(char c) {
    if (c >= 'a' && c <= 'z') {
        return lower_base + (c - 'a');
    }
    if (c >= 'A' && c <= 'Z') {
        return upper_base + (c - 'A');
    }
    if (c == '0') {
        return pad;
    }
    if (c == '_') {
        return mask;
    }
    throw ContractError("contract-violation", "encode: invalid character");
}

std::vector<SequenceSample> gen_forward_corpus(int length) {
    require(length >= 2, "domain-error", "gen_forward_corpus: length must be >= 2");
    std::vector<SequenceSample> corpus;
    corpus.reserve(26 * length * (length - 1) / 2);
    for (int letter = 0; letter < 26; ++letter) {
        for (int i = 0; i < length; ++i) {
            for (int j = i + 1; j < length; ++j) {
                SequenceSample s;
                s.tokens.assign(static_cast<size_t>(length), Vocab::pad);
                s.tokens[i] = Vocab::lower(letter);
                s.tokens[j] = Vocab::upper(letter);
                s.lower_pos = i;
                s.upper_pos = j;
                s.letter = letter;
                corpus.push_back(std::move(s));
            }
        }
    }
    return corpus;
}

std::vector<PromptPlacement> forward_placements(int length) {
    std::vector<PromptPlacement> out;
    for (int i = 0; i < length; ++i) {
        for (int j = i + 1; j < length; ++j) {
            out.push_back({i, j});  // mask at i, uppercase at j
        }
    }
    return out;
}

std::vector<PromptPlacement> reverse_placements(int length) {
    std::vector<PromptPlacement> out;
    for (int j = 0; j < length; ++j) {
        for (int i = j + 1; i < length; ++i) {
            out.push_back({i, j});  // uppercase at j, mask at i
        }
    }
    return out;
}

std::vector<PermutationPair> enumerate_permutation_pairs(int length) {
    require(length >= 2, "domain-error", "enumerate_permutation_pairs: length must be >= 2");
    const auto fwd = forward_placements(length);
    const auto rev = reverse_placements(length);
    std::vector<PermutationPair> pairs;
    pairs.reserve(fwd.size() * rev.size());
    for (const auto& f : fwd) {
        for (const auto& r : rev) {
            PermutationPair p;
            p.fwd = f;
            p.rev = r;
            p.delta1 = f.upper_pos - f.mask_pos;
            p.delta2 = r.mask_pos - r.upper_pos;
            pairs.push_back(p);
        }
    }
    return pairs;
}

std::vector<int> placement_prompt(int length, const PromptPlacement& p, int letter) {
    require(p.mask_pos >= 0 && p.mask_pos < length && p.upper_pos >= 0 && p.upper_pos < length &&
                p.mask_pos != p.upper_pos,
            "contract-violation", "placement_prompt: bad placement");
    std::vector<int> tokens(static_cast<size_t>(length), Vocab::pad);
    tokens[p.mask_pos] = Vocab::mask;
    tokens[p.upper_pos] = Vocab::upper(letter);
    return tokens;
}

MaskedBatch corrupt(const SequenceSample& clean, double t_min, RngStream& rng) {
    require(t_min > 0.0 && t_min <= 1.0, "domain-error", "corrupt: t_min must lie in (0,1]");
    const double t = t_min + (1.0 - t_min) * rng.uniform();
    return corrupt_with_t(clean, t, rng);
}

MaskedBatch corrupt_with_t(const SequenceSample& clean, double t, RngStream& rng) {
    require(t > 0.0 && t <= 1.0, "domain-error", "corrupt: t must lie in (0,1]");
    MaskedBatch b;
    b.clean = clean.tokens;
    b.corrupted = clean.tokens;
    b.t = t;
    for (size_t i = 0; i < b.clean.size(); ++i) {
        if (rng.uniform() < b.t) {
            b.corrupted[i] = Vocab::mask;
            b.mask_positions.push_back(static_cast<int>(i));
        }
    }
    if (b.mask_positions.empty()) {
        const int pos = rng.uniform_int(static_cast<int>(b.clean.size()));
        b.corrupted[pos] = Vocab::mask;
        b.mask_positions.push_back(pos);
        b.force_masked = true;
    }
    return b;
}

const char* to_string(Arch a) { return a == Arch::mdm ? "mdm" : "arm"; }

Arch arch_from_string(const std::string& s) {
    if (s == "mdm") {
        return Arch::mdm;
    }
    if (s == "arm") {
        return Arch::arm;
    }
    throw ContractError("contract-violation", "unknown arch: " + s);
}

std::vector<int> make_query(int length, Direction dir, int letter, Arch arch) {
    require(letter >= 0 && letter < 26, "contract-violation", "make_query: bad letter");
    const int cue = dir == Direction::fwd ? Vocab::lower(letter) : Vocab::upper(letter);
    if (arch == Arch::arm) {
        return {cue};
    }
    std::vector<int> q(static_cast<size_t>(length), Vocab::mask);
    q[0] = cue;
    return q;
}

void write_corpus(const std::string& path, int length,
                  const std::vector<SequenceSample>& corpus) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "io-error", "write_corpus: cannot open " + path);
    for (const auto& s : corpus) {
        nlohmann::json j;
        j["tokens"] = s.tokens;
        j["i"] = s.lower_pos;
        j["j"] = s.upper_pos;
        j["letter"] = s.letter;
        out << j.dump() << "\n";
    }
    require(out.good(), "io-error", "write_corpus: write failed");
    (void)length;
}

std::vector<SequenceSample> read_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "io-error", "read_corpus: cannot open " + path);
    std::vector<SequenceSample> corpus;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const nlohmann::json j = nlohmann::json::parse(line);
        SequenceSample s;
        s.tokens = j.at("tokens").get<std::vector<int>>();
        s.lower_pos = j.at("i").get<int>();
        s.upper_pos = j.at("j").get<int>();
        s.letter = j.at("letter").get<int>();
        corpus.push_back(std::move(s));
    }
    return corpus;
}

}  // namespace revlab
