#pragma once

#include <string>
#include <vector>

#include "gounsafe/source.hpp"

namespace gounsafe {

enum class TokenKind { Eof, Ident, Keyword, IntLit, FloatLit, ImagLit, CharLit, StringLit, Op };

struct Token {
    TokenKind kind = TokenKind::Eof;
    std::string text;
    int line = 0;
    int col = 0;
    std::size_t offset = 0;
    std::size_t end_offset = 0;
};

// Tokenizes Go source with automatic semicolon insertion. Inserted
// semicolons appear as ordinary ";" Op tokens. Throws ParseError on
// token-level garbage (unterminated literals/comments, stray characters).
std::vector<Token> lex(const std::string& text);

bool is_go_keyword(const std::string& word);

}  // namespace gounsafe
