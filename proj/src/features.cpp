#include "cbforge/features.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "cbforge/digest.hpp"
#include "cbforge/errors.hpp"

namespace cbforge {
namespace {

// Decode one UTF-8 code point starting at s[i]; invalid bytes decode as
// U+FFFD and consume one byte.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) {
    return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
  };
  if (b0 < 0x80) {
    i += 1;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0 && cont(1)) {
    char32_t cp = ((b0 & 0x1F) << 6) | (static_cast<unsigned char>(s[i + 1]) & 0x3F);
    i += 2;
    return cp;
  }
  if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
    char32_t cp = ((b0 & 0x0F) << 12) | ((static_cast<unsigned char>(s[i + 1]) & 0x3F) << 6) |
                  (static_cast<unsigned char>(s[i + 2]) & 0x3F);
    i += 3;
    return cp;
  }
  if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
    char32_t cp = ((b0 & 0x07) << 18) | ((static_cast<unsigned char>(s[i + 1]) & 0x3F) << 12) |
                  ((static_cast<unsigned char>(s[i + 2]) & 0x3F) << 6) |
                  (static_cast<unsigned char>(s[i + 3]) & 0x3F);
    i += 4;
    return cp;
  }
  i += 1;
  return 0xFFFD;
}

void append_utf8(std::string& out, char32_t cp) {
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

bool is_emoji(char32_t cp) {
  return (cp >= 0x1F000 && cp <= 0x1FAFF) || (cp >= 0x2600 && cp <= 0x27BF) ||
         (cp >= 0x2B00 && cp <= 0x2BFF) || cp == 0x2764 || cp == 0x203C || cp == 0x2049;
}

// Attach to the preceding emoji: variation selector, ZWJ, skin tones, tags.
bool is_emoji_modifier(char32_t cp) {
  return cp == 0xFE0F || cp == 0xFE0E || cp == 0x200D || (cp >= 0x1F3FB && cp <= 0x1F3FF) ||
         (cp >= 0xE0020 && cp <= 0xE007F);
}

bool is_word_char(char32_t cp) {
  if (cp < 0x80) return std::isalnum(static_cast<int>(cp)) || cp == '\'' || cp == '_';
  if (cp == 0xFFFD || is_emoji(cp) || is_emoji_modifier(cp)) return false;
  // General punctuation, currency, arrows, math, box drawing, CJK punctuation.
  if ((cp >= 0x2000 && cp <= 0x2BFF) || (cp >= 0x3000 && cp <= 0x303F)) return false;
  if (cp == 0x00A0 || (cp >= 0x00A1 && cp <= 0x00BF) || cp == 0x00D7 || cp == 0x00F7) return false;
  return true;
}

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
  return cp;
}

}  // namespace

void FeatureConfig::validate() const {
  if (buckets_log2 < 1 || buckets_log2 > 30) {
    throw ConfigError("feature buckets_log2 must be in [1, 30]");
  }
  if (char_min < 1 || char_max < char_min) throw ConfigError("bad character n-gram range");
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string word;
  std::size_t i = 0;
  auto flush = [&] {
    // Apostrophes only count inside a word.
    while (!word.empty() && word.front() == '\'') word.erase(word.begin());
    while (!word.empty() && word.back() == '\'') word.pop_back();
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  while (i < text.size()) {
    const char32_t cp = next_code_point(text, i);
    if (is_word_char(cp)) {
      append_utf8(word, to_lower(cp));
      continue;
    }
    flush();
    if (is_emoji(cp)) {
      std::string emoji;
      append_utf8(emoji, cp);
      while (i < text.size()) {
        std::size_t j = i;
        const char32_t next = next_code_point(text, j);
        if (is_emoji_modifier(next)) {
          append_utf8(emoji, next);
          i = j;
          // A joiner glues the following emoji into the same token.
          if (next == 0x200D && i < text.size()) {
            std::size_t k = i;
            const char32_t joined = next_code_point(text, k);
            if (is_emoji(joined)) {
              append_utf8(emoji, joined);
              i = k;
            }
          }
        } else {
          break;
        }
      }
      tokens.push_back(std::move(emoji));
    }
  }
  flush();
  return tokens;
}

SparseVector featurize(std::string_view text, const FeatureConfig& cfg) {
  const std::uint64_t mask = cfg.buckets() - 1;
  std::vector<std::uint32_t> hits;
  const auto tokens = tokenize(text);
  hits.reserve(tokens.size() * 16);

  auto hash_into = [&](std::string_view prefix, std::string_view s) {
    hits.push_back(static_cast<std::uint32_t>(fnv1a64(s, fnv1a64(prefix)) & mask));
  };
  for (const auto& t : tokens) hash_into("w:", t);
  if (cfg.word_bigrams) {
    for (std::size_t k = 1; k < tokens.size(); ++k) {
      hash_into("b:", tokens[k - 1] + ' ' + tokens[k]);
    }
  }
  if (cfg.char_max > 0) {
    // Character n-grams over " tok1 tok2 ... " counted in code points.
    std::string padded = " ";
    for (const auto& t : tokens) {
      padded += t;
      padded += ' ';
    }
    std::vector<std::size_t> starts;
    for (std::size_t p = 0; p < padded.size();) {
      starts.push_back(p);
      next_code_point(padded, p);
    }
    starts.push_back(padded.size());
    const std::size_t n_cp = starts.size() - 1;
    for (int n = cfg.char_min; n <= cfg.char_max; ++n) {
      const auto un = static_cast<std::size_t>(n);
      for (std::size_t a = 0; a + un <= n_cp; ++a) {
        hash_into("c:", std::string_view(padded).substr(starts[a], starts[a + un] - starts[a]));
      }
    }
  }

  std::sort(hits.begin(), hits.end());
  SparseVector v;
  for (std::size_t k = 0; k < hits.size();) {
    std::size_t e = k;
    while (e < hits.size() && hits[e] == hits[k]) ++e;
    v.index.push_back(hits[k]);
    v.value.push_back(static_cast<double>(e - k));
    k = e;
  }
  return v;
}

std::uint32_t word_bucket(std::string_view token, const FeatureConfig& cfg) {
  return static_cast<std::uint32_t>(fnv1a64(token, fnv1a64("w:")) & (cfg.buckets() - 1));
}

std::vector<SparseVector> featurize_all(std::span<const std::string_view> texts,
                                        const FeatureConfig& cfg) {
  std::vector<SparseVector> out(texts.size());
  const auto n = static_cast<std::int64_t>(texts.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = featurize(texts[static_cast<std::size_t>(i)], cfg);
  }
  return out;
}

namespace serial {

std::vector<SparseVector> featurize_all(std::span<const std::string_view> texts,
                                        const FeatureConfig& cfg) {
  std::vector<SparseVector> out;
  out.reserve(texts.size());
  for (auto t : texts) out.push_back(featurize(t, cfg));
  return out;
}

}  // namespace serial
}  // namespace cbforge
