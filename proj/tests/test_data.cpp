#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "revlab/data.hpp"

using namespace revlab;

TEST_CASE("vocabulary pairing and codec") {
    CHECK(Vocab::size == 54);
    for (int letter = 0; letter < 26; ++letter) {
        CHECK(Vocab::pair_of(Vocab::lower(letter)) == Vocab::upper(letter));
        CHECK(Vocab::pair_of(Vocab::upper(letter)) == Vocab::lower(letter));
    }
    CHECK(Vocab::encode('d') == Vocab::lower(3));
    CHECK(Vocab::encode('D') == Vocab::upper(3));
    CHECK(Vocab::encode('0') == Vocab::pad);
    CHECK(Vocab::decode(Vocab::lower(25)) == 'z');
    CHECK_THROWS_AS(Vocab::pair_of(Vocab::pad), ContractError);
}

TEST_CASE("forward corpus enumerates exactly the i<j placements") {
    const auto corpus3 = gen_forward_corpus(3);
    CHECK(corpus3.size() == 26 * 3);
    // Pair (d, D): dD0, d0D, 0dD.
    std::set<std::string> seen;
    for (const auto& s : corpus3) {
        if (s.letter != 3) {
            continue;
        }
        std::string text;
        for (int t : s.tokens) {
            text += Vocab::decode(t);
        }
        seen.insert(text);
    }
    CHECK(seen == std::set<std::string>{"dD0", "d0D", "0dD"});
    CHECK(seen.count("Dd0") == 0);

    CHECK(gen_forward_corpus(2).size() == 26);
    CHECK(gen_forward_corpus(10).size() == 26 * 45);
    // Combinatorial oracle C(10, 2).
    int count = 0;
    for (int i = 0; i < 10; ++i) {
        for (int j = i + 1; j < 10; ++j) {
            ++count;
        }
    }
    CHECK(gen_forward_corpus(10).size() == 26u * count);
    CHECK_THROWS_AS(gen_forward_corpus(1), ContractError);
}

TEST_CASE("no corpus sample violates forward ordering") {
    for (int length : {2, 10, 20, 30, 40}) {
        for (const auto& s : gen_forward_corpus(length)) {
            CHECK(s.lower_pos < s.upper_pos);
            CHECK(s.tokens[s.lower_pos] == Vocab::lower(s.letter));
            CHECK(s.tokens[s.upper_pos] == Vocab::upper(s.letter));
            for (int pos = 0; pos < length; ++pos) {
                if (pos != s.lower_pos && pos != s.upper_pos) {
                    CHECK(s.tokens[pos] == Vocab::pad);
                }
            }
        }
    }
}

TEST_CASE("permutation pairs cover every combination") {
    const auto pairs = enumerate_permutation_pairs(4);
    CHECK(pairs.size() == 36);  // (4*3/2)^2

    std::multiset<int> fwd_dists;
    for (const auto& p : forward_placements(4)) {
        fwd_dists.insert(p.distance());
    }
    CHECK(fwd_dists == std::multiset<int>{1, 1, 1, 2, 2, 3});

    // Every forward template has a mirrored reverse with the same distance.
    for (const auto& f : forward_placements(4)) {
        bool mirrored = false;
        for (const auto& r : reverse_placements(4)) {
            mirrored = mirrored || r.distance() == f.distance();
        }
        CHECK(mirrored);
    }

    // delta1 + delta2 covers [2, 2(L-1)].
    for (int length : {4, 10}) {
        std::set<int> sums;
        for (const auto& p : enumerate_permutation_pairs(length)) {
            CHECK(p.delta1 > 0);
            CHECK(p.delta2 > 0);
            sums.insert(p.delta1 + p.delta2);
        }
        for (int s = 2; s <= 2 * (length - 1); ++s) {
            CHECK(sums.count(s) == 1);
        }
    }
}

TEST_CASE("corrupt masks independently and preserves unmasked content") {
    RngStream rng(61);
    const auto corpus = gen_forward_corpus(10);
    const SequenceSample& s = corpus[137];

    // t forced to 1 masks everything.
    const MaskedBatch all = corrupt_with_t(s, 1.0, rng);
    CHECK(all.mask_positions.size() == 10);
    for (int t : all.corrupted) {
        CHECK(t == Vocab::mask);
    }

    // Empirical mask rate at fixed t = 0.3 over 1e5 positions.
    int masked = 0, total = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const MaskedBatch b = corrupt_with_t(s, 0.3, rng);
        if (!b.force_masked) {
            masked += static_cast<int>(b.mask_positions.size());
            total += 10;
        }
        for (size_t i = 0; i < b.clean.size(); ++i) {
            if (b.corrupted[i] != Vocab::mask) {
                CHECK(b.corrupted[i] == b.clean[i]);
            }
        }
    }
    const double rate = static_cast<double>(masked) / total;
    CHECK(rate > 0.295);
    CHECK(rate < 0.305);

    // Force-mask fallback: at tiny t a zero-mask draw happens quickly.
    const auto corpus2 = gen_forward_corpus(2);
    bool saw_forced = false;
    for (int trial = 0; trial < 10000 && !saw_forced; ++trial) {
        const MaskedBatch b = corrupt_with_t(corpus2[0], 1e-3, rng);
        if (b.force_masked) {
            saw_forced = true;
            CHECK(b.mask_positions.size() == 1);
        }
        CHECK(!b.mask_positions.empty());
    }
    CHECK(saw_forced);
}

TEST_CASE("queries place the cue at position zero") {
    // MDM reverse, L = 3, letter d -> [D, M, M].
    const auto q = make_query(3, Direction::rev, 3, Arch::mdm);
    CHECK(q == std::vector<int>{Vocab::upper(3), Vocab::mask, Vocab::mask});

    const auto a = make_query(10, Direction::fwd, 3, Arch::arm);
    CHECK(a == std::vector<int>{Vocab::lower(3)});

    // Swapping direction swaps the cue's case (involution on the prompt).
    const auto fwd = make_query(5, Direction::fwd, 7, Arch::mdm);
    const auto rev = make_query(5, Direction::rev, 7, Arch::mdm);
    CHECK(Vocab::pair_of(fwd[0]) == rev[0]);
    CHECK(Vocab::pair_of(rev[0]) == fwd[0]);
}

TEST_CASE("placement prompts put the mask and uppercase in place") {
    const auto prompt = placement_prompt(5, {1, 3}, 2);
    CHECK(prompt == std::vector<int>{Vocab::pad, Vocab::mask, Vocab::pad, Vocab::upper(2),
                                     Vocab::pad});
}

TEST_CASE("corpus files round-trip") {
    const auto corpus = gen_forward_corpus(6);
    const std::string path =
        (std::filesystem::temp_directory_path() / "revlab_corpus_test.jsonl").string();
    write_corpus(path, 6, corpus);
    const auto loaded = read_corpus(path);
    REQUIRE(loaded.size() == corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
        CHECK(loaded[i].tokens == corpus[i].tokens);
        CHECK(loaded[i].lower_pos == corpus[i].lower_pos);
        CHECK(loaded[i].upper_pos == corpus[i].upper_pos);
        CHECK(loaded[i].letter == corpus[i].letter);
    }
    std::filesystem::remove(path);
}
