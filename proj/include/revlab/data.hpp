#pragma once

#include <string>

#include "revlab/minimal.hpp"
#include "revlab/rng.hpp"

namespace revlab {

// Case-pair vocabulary: 26 lowercase, 26 uppercase, pad '0', mask. The pad is
// an ordinary token predicted like any other.
struct Vocab {
    static constexpr int lower_base = 0;
    static constexpr int upper_base = 26;
    static constexpr int pad = 52;
    static constexpr int mask = 53;
    static constexpr int size = 54;

    static int lower(int letter) { return lower_base + letter; }
    static int upper(int letter) { return upper_base + letter; }
    static bool is_lower(int id) { return id >= lower_base && id < lower_base + 26; }
    static bool is_upper(int id) { return id >= upper_base && id < upper_base + 26; }
    static int pair_of(int id);  // lowercase <-> uppercase
    static char decode(int id);
    static int encode(char c);
};

struct SequenceSample {
    std::vector<int> tokens;
    int lower_pos = 0;
    int upper_pos = 0;
    int letter = 0;  // 0..25
};

// All 26 * L(L-1)/2 forward placements (lowercase strictly before uppercase),
// zero reversed ones.
std::vector<SequenceSample> gen_forward_corpus(int length);

// A letter-agnostic placement of (mask, uppercase) inside a padded sequence.
struct PromptPlacement {
    int mask_pos = 0;
    int upper_pos = 0;

    int distance() const { return std::abs(mask_pos - upper_pos); }
};

struct PermutationPair {
    PromptPlacement fwd;  // mask before uppercase, delta1 = upper - mask
    PromptPlacement rev;  // mask after uppercase, delta2 = mask - upper
    int delta1 = 0;
    int delta2 = 0;
};

// Every (forward placement, reverse placement) combination:
// (L(L-1)/2)^2 pairs per letter grouping.
std::vector<PermutationPair> enumerate_permutation_pairs(int length);

std::vector<PromptPlacement> forward_placements(int length);
std::vector<PromptPlacement> reverse_placements(int length);

// Tokens for a placement: uppercase letter at upper_pos, mask at mask_pos,
// pads elsewhere. The masked-position target is the lowercase letter.
std::vector<int> placement_prompt(int length, const PromptPlacement& p, int letter);

struct MaskedBatch {
    std::vector<int> clean;
    std::vector<int> corrupted;
    double t = 0.0;
    std::vector<int> mask_positions;
    bool force_masked = false;  // the zero-mask fallback fired
};

// Independent masking with probability t ~ U[t_min, 1]; guarantees at least
// one masked position by force-masking a uniform position when none hit.
MaskedBatch corrupt(const SequenceSample& clean, double t_min, RngStream& rng);

// Same with a caller-chosen corruption level (per-batch t sampling).
MaskedBatch corrupt_with_t(const SequenceSample& clean, double t, RngStream& rng);

enum class Arch { mdm, arm };

const char* to_string(Arch a);
Arch arch_from_string(const std::string& s);

// Test-time query: the cue letter at position 0. MDM gets a full-length
// prompt with masks, ARM a 1-token prefix.
std::vector<int> make_query(int length, Direction dir, int letter, Arch arch);

// Corpus file IO: one JSON object per line {tokens, i, j, letter} plus a
// manifest recording L, counts and the generator seed.
void write_corpus(const std::string& path, int length, const std::vector<SequenceSample>& corpus);
std::vector<SequenceSample> read_corpus(const std::string& path);

}  // namespace revlab
