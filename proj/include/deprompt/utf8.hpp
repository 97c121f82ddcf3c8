#pragma once

// Small UTF-8 toolkit. Entity offsets throughout the library are Unicode
// scalar-value (code point) indices, never bytes, so prompts in any script
// keep their slicing invariants.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "deprompt/errors.hpp"

namespace deprompt::utf8 {

inline bool is_continuation(unsigned char b) { return (b & 0xC0) == 0x80; }

/// Decodes one code point starting at byte `i`; advances `i` past it.
/// Returns U+FFFD and advances by one byte on malformed input.
inline char32_t decode_at(std::string_view s, size_t& i) {
    unsigned char b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    size_t need = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        need = 1;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        need = 2;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        need = 3;
        cp = b0 & 0x07;
    } else {
        ++i;
        return 0xFFFD;
    }
    if (i + need >= s.size()) {
        ++i;
        return 0xFFFD;
    }
    for (size_t k = 1; k <= need; ++k) {
        unsigned char bk = static_cast<unsigned char>(s[i + k]);
        if (!is_continuation(bk)) {
            ++i;
            return 0xFFFD;
        }
        cp = (cp << 6) | (bk & 0x3F);
    }
    i += need + 1;
    return cp;
}

inline bool is_valid(std::string_view s) {
    size_t i = 0;
    while (i < s.size()) {
        size_t before = i;
        char32_t cp = decode_at(s, i);
        if (cp == 0xFFFD && i == before + 1 &&
            static_cast<unsigned char>(s[before]) >= 0x80)
            return false;
        if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    }
    return true;
}

inline std::u32string decode(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) out.push_back(decode_at(s, i));
    return out;
}

inline void append(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline std::string encode(const std::u32string& cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t cp : cps) append(out, cp);
    return out;
}

inline size_t length(std::string_view s) {
    size_t n = 0, i = 0;
    while (i < s.size()) {
        decode_at(s, i);
        ++n;
    }
    return n;
}

/// Byte offset of each code point, plus a final entry equal to s.size().
inline std::vector<size_t> byte_index(std::string_view s) {
    std::vector<size_t> idx;
    size_t i = 0;
    while (i < s.size()) {
        idx.push_back(i);
        decode_at(s, i);
    }
    idx.push_back(s.size());
    return idx;
}

/// Substring by code-point range [start, end).
inline std::string slice(std::string_view s, size_t start, size_t end) {
    auto idx = byte_index(s);
    if (start > end || end + 1 > idx.size())
        throw SpanError("slice [" + std::to_string(start) + "," + std::to_string(end) +
                        ") out of bounds for text of length " + std::to_string(idx.size() - 1));
    return std::string(s.substr(idx[start], idx[end] - idx[start]));
}

inline bool is_ascii_alnum(char32_t cp) {
    return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
}

/// Default-ignorable format characters (the adversarial-perturbation alphabet
/// plus the usual suspects). These never count as word characters.
inline bool is_default_ignorable(char32_t cp) {
    return cp == 0x200B || cp == 0x200C || cp == 0x200D || cp == 0x00AD ||
           cp == 0xFEFF || cp == 0x2060;
}

/// Word character for tokenization: ASCII alphanumerics, underscore, and any
/// non-ASCII code point that is not a default-ignorable format character.
inline bool is_word_char(char32_t cp) {
    if (cp < 0x80) return is_ascii_alnum(cp) || cp == '_';
    return !is_default_ignorable(cp);
}

inline bool is_space(char32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == 0x00A0;
}

inline char32_t ascii_lower(char32_t cp) {
    return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
}

/// ASCII-only lowercase; multi-byte sequences pass through untouched.
inline std::string ascii_lower_copy(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
    return out;
}

struct Token {
    std::string text;   // normalized (ASCII-lowercased) form
    size_t start = 0;   // code-point offset of first character
    size_t end = 0;     // one past the last character
};

/// Splits text into word tokens (maximal runs of word characters), lowercased.
/// Default-ignorable characters are skipped entirely, so a zero-width space
/// inside a word does not split it here.
inline std::vector<Token> word_tokens(std::string_view s) {
    std::u32string cps = decode(s);
    std::vector<Token> out;
    size_t i = 0;
    while (i < cps.size()) {
        if (is_default_ignorable(cps[i]) || !is_word_char(cps[i])) {
            ++i;
            continue;
        }
        size_t start = i;
        std::string text;
        while (i < cps.size() && (is_word_char(cps[i]) || is_default_ignorable(cps[i]))) {
            if (!is_default_ignorable(cps[i])) append(text, ascii_lower(cps[i]));
            ++i;
        }
        out.push_back(Token{std::move(text), start, i});
    }
    return out;
}

inline std::vector<std::string> word_token_texts(std::string_view s) {
    std::vector<std::string> out;
    for (auto& t : word_tokens(s)) out.push_back(std::move(t.text));
    return out;
}

inline bool is_pure_digits(std::string_view tok) {
    if (tok.empty()) return false;
    for (char c : tok)
        if (c < '0' || c > '9') return false;
    return true;
}

/// Case-insensitive (ASCII fold) substring test.
inline bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return true;
    std::string h = ascii_lower_copy(haystack);
    std::string n = ascii_lower_copy(needle);
    return h.find(n) != std::string::npos;
}

} // namespace deprompt::utf8
