#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cotig {

using TokenId = std::int32_t;

/// Reserved ids shared by every built-in vocabulary.
namespace special {
inline constexpr TokenId pad = 0;
inline constexpr TokenId bos = 1;
inline constexpr TokenId eos = 2;
inline constexpr TokenId answer_marker = 3;
inline constexpr TokenId count = 4;
}  // namespace special

struct Token;

/// Byte-level tokenizer over a vocabulary of `vocab_size` ids.
///
/// Ids 0..3 are the specials above; byte b maps to 4 + (b mod (V - 4)), so with
/// V = 260 the mapping is a bijection over bytes and decode() is exact. Token
/// texts longer than one byte (pre-tokenized corpora) hash into the byte range.
class ByteTokenizer {
 public:
  explicit ByteTokenizer(std::size_t vocab_size = 260);

  [[nodiscard]] std::size_t vocab_size() const noexcept { return vocab_size_; }
  [[nodiscard]] bool lossless() const noexcept { return vocab_size_ >= 260; }

  [[nodiscard]] TokenId byte_id(unsigned char byte) const noexcept;
  [[nodiscard]] TokenId token_id(std::string_view token_text) const noexcept;

  /// One Token per byte, spans relative to `text`.
  [[nodiscard]] std::vector<Token> tokenize(std::string_view text) const;
  [[nodiscard]] std::vector<TokenId> encode(std::string_view text) const;
  /// Non-byte ids (specials) are dropped. Requires lossless() for exact inversion.
  [[nodiscard]] std::string decode(std::span<const TokenId> ids) const;

 private:
  std::size_t vocab_size_;
};

}  // namespace cotig
