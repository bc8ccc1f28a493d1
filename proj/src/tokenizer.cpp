#include "cotig/tokenizer.hpp"

#include "cotig/error.hpp"
#include "cotig/trace.hpp"

namespace cotig {

ByteTokenizer::ByteTokenizer(std::size_t vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size_ <= static_cast<std::size_t>(special::count)) {
    throw Error(ErrorKind::config, "byte tokenizer needs a vocabulary larger than the special ids");
  }
}

TokenId ByteTokenizer::byte_id(unsigned char byte) const noexcept {
  const auto span = vocab_size_ - special::count;
  return special::count + static_cast<TokenId>(byte % span);
}

TokenId ByteTokenizer::token_id(std::string_view token_text) const noexcept {
  if (token_text.size() == 1) {
    return byte_id(static_cast<unsigned char>(token_text[0]));
  }
  // FNV-1a
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : token_text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  const auto span = vocab_size_ - special::count;
  return special::count + static_cast<TokenId>(h % span);
}

std::vector<Token> ByteTokenizer::tokenize(std::string_view text) const {
  std::vector<Token> out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    out.push_back(Token{i, std::string(1, text[i]), {i, i + 1}});
  }
  return out;
}

std::vector<TokenId> ByteTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(byte_id(c));
  return ids;
}

std::string ByteTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id >= special::count && static_cast<std::size_t>(id) < vocab_size_) {
      out.push_back(static_cast<char>(id - special::count));
    }
  }
  return out;
}

}  // namespace cotig
