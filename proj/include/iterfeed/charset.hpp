/* Copyright 2026 The iterfeed Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef ITERFEED_CHARSET_HPP_
#define ITERFEED_CHARSET_HPP_

#include <map>
#include <string>
#include <vector>

#include "iterfeed/common.hpp"

namespace iterfeed {

// A character sequence stored as symbol token ids, without EOS/PAD; decoding
// and loss code appends EOS where the contract requires one.
using CharSequence = std::vector<int>;

// Fixed token space: PAD, EOS, UNK, then the symbol characters in order.
class Charset {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;
  static constexpr int kFirstSymbol = 3;

  explicit Charset(std::string symbols = "abcdefghijklmnopqrstuvwxyz")
      : symbols_(std::move(symbols)) {
    if (symbols_.empty()) throw DataError("charset: needs >= 1 symbol");
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      if (index_.count(symbols_[i]))
        throw DataError(std::string("charset: duplicate symbol '") +
                        symbols_[i] + "'");
      index_[symbols_[i]] = kFirstSymbol + static_cast<int>(i);
    }
  }

  int size() const { return static_cast<int>(symbols_.size()) + 3; }
  const std::string& symbols() const { return symbols_; }

  bool has_char(char c) const { return index_.count(c) > 0; }

  int token_of(char c) const {
    auto it = index_.find(c);
    return it == index_.end() ? kUnk : it->second;
  }

  char char_of(int token) const {
    if (token < kFirstSymbol || token >= size()) return '?';
    return symbols_[static_cast<std::size_t>(token - kFirstSymbol)];
  }

  bool is_symbol(int token) const {
    return token >= kFirstSymbol && token < size();
  }

  bool valid_sequence(const CharSequence& seq) const {
    for (int tok : seq)
      if (!is_symbol(tok)) return false;
    return true;
  }

  // Encodes a word; throws naming the offending character when strict.
  CharSequence encode(const std::string& word, bool strict = true) const {
    CharSequence out;
    out.reserve(word.size());
    for (char c : word) {
      auto it = index_.find(c);
      if (it == index_.end()) {
        if (strict)
          throw DataError(std::string("charset: unknown character '") + c +
                          "' in \"" + word + "\"");
        out.push_back(kUnk);
      } else {
        out.push_back(it->second);
      }
    }
    return out;
  }

  std::string decode(const CharSequence& seq) const {
    std::string out;
    out.reserve(seq.size());
    for (int tok : seq) out.push_back(char_of(tok));
    return out;
  }

 private:
  std::string symbols_;
  std::map<char, int> index_;
};

}  // namespace iterfeed

#endif  // ITERFEED_CHARSET_HPP_
