#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace srtree {

// Fixed-universe bitset used to identify subproblems. Bits index equivalent-point
// groups (or raw samples when a caller builds one that way); the universe size is
// fixed at construction and all operands of a binary op must share it.
//
// Invariants: trailing bits past `universe` are zero, `count_` always equals the
// popcount of the words, and `hash_` is a pure function of the words so equal sets
// hash equally.
class SupportSet {
public:
    SupportSet() = default;

    static SupportSet empty(std::size_t universe) {
        SupportSet s;
        s.universe_ = universe;
        s.words_.assign(word_count(universe), 0);
        s.count_ = 0;
        s.rehash();
        return s;
    }

    static SupportSet full(std::size_t universe) {
        SupportSet s;
        s.universe_ = universe;
        s.words_.assign(word_count(universe), ~std::uint64_t{0});
        if (universe % 64 != 0 && !s.words_.empty())
            s.words_.back() &= (std::uint64_t{1} << (universe % 64)) - 1;
        s.count_ = universe;
        s.rehash();
        return s;
    }

    std::size_t universe() const { return universe_; }
    std::size_t popcount() const { return count_; }
    bool any() const { return count_ > 0; }
    std::uint64_t hash() const { return hash_; }
    const std::vector<std::uint64_t>& words() const { return words_; }

    bool test(std::size_t i) const {
        return (words_[i / 64] >> (i % 64)) & 1u;
    }

    // Mutates a set while it is being built; callers must not mutate sets that
    // are already used as hash keys.
    void set(std::size_t i) {
        if (i >= universe_) throw std::out_of_range("SupportSet::set: index past universe");
        std::uint64_t& w = words_[i / 64];
        std::uint64_t bit = std::uint64_t{1} << (i % 64);
        if (!(w & bit)) {
            w |= bit;
            ++count_;
        }
        rehash();
    }

    // this & mask
    SupportSet intersect(const SupportSet& mask) const {
        check_same_universe(mask);
        SupportSet out;
        out.universe_ = universe_;
        out.words_.resize(words_.size());
        std::size_t c = 0;
        for (std::size_t k = 0; k < words_.size(); ++k) {
            out.words_[k] = words_[k] & mask.words_[k];
            c += static_cast<std::size_t>(__builtin_popcountll(out.words_[k]));
        }
        out.count_ = c;
        out.rehash();
        return out;
    }

    // this & ~mask
    SupportSet subtract(const SupportSet& mask) const {
        check_same_universe(mask);
        SupportSet out;
        out.universe_ = universe_;
        out.words_.resize(words_.size());
        std::size_t c = 0;
        for (std::size_t k = 0; k < words_.size(); ++k) {
            out.words_[k] = words_[k] & ~mask.words_[k];
            c += static_cast<std::size_t>(__builtin_popcountll(out.words_[k]));
        }
        out.count_ = c;
        out.rehash();
        return out;
    }

    bool operator==(const SupportSet& o) const {
        // Hash inequality short-circuits; equal hashes still compare words so a
        // collision can never alias two distinct subproblems.
        if (universe_ != o.universe_ || count_ != o.count_ || hash_ != o.hash_) return false;
        return words_ == o.words_;
    }
    bool operator!=(const SupportSet& o) const { return !(*this == o); }

    template <typename Fn>
    void for_each_set(Fn&& fn) const {
        for (std::size_t k = 0; k < words_.size(); ++k) {
            std::uint64_t w = words_[k];
            while (w) {
                unsigned bit = static_cast<unsigned>(__builtin_ctzll(w));
                fn(k * 64 + bit);
                w &= w - 1;
            }
        }
    }

    std::size_t memory_bytes() const {
        return sizeof(SupportSet) + words_.capacity() * sizeof(std::uint64_t);
    }

private:
    static std::size_t word_count(std::size_t universe) { return (universe + 63) / 64; }

    void check_same_universe(const SupportSet& o) const {
        if (universe_ != o.universe_)
            throw std::invalid_argument("SupportSet: mismatched universe sizes");
    }

    static std::uint64_t mix64(std::uint64_t x) {
        // splitmix64 finalizer; good avalanche, no external deps.
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    void rehash() {
        std::uint64_t h = mix64(universe_);
        for (std::uint64_t w : words_) h = mix64(h ^ w);
        hash_ = h;
    }

    std::vector<std::uint64_t> words_;
    std::size_t universe_ = 0;
    std::size_t count_ = 0;
    std::uint64_t hash_ = 0;
};

struct SupportSetHash {
    std::size_t operator()(const SupportSet& s) const { return static_cast<std::size_t>(s.hash()); }
};

} // namespace srtree
