#include "gounsafe/lexer.hpp"

#include <array>
#include <cctype>
#include <unordered_set>

namespace gounsafe {

namespace {

const std::unordered_set<std::string> kKeywords = {
    "break", "case", "chan", "const", "continue", "default", "defer", "else",
    "fallthrough", "for", "func", "go", "goto", "if", "import", "interface",
    "map", "package", "range", "return", "select", "struct", "switch", "type",
    "var",
};

// Multi-character operators, longest first so greedy matching works.
const std::array<const char*, 4> kOps3 = {"<<=", ">>=", "&^=", "..."};
const std::array<const char*, 19> kOps2 = {
    "<<", ">>", "&^", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "&&", "||", "<-", "++", "--", "==", "!=", ":=",
};
const char* kOps1 = "+-*/%&|^<>=!():;,.[]{}";

bool semicolon_trigger(const Token& t) {
    switch (t.kind) {
        case TokenKind::Ident:
        case TokenKind::IntLit:
        case TokenKind::FloatLit:
        case TokenKind::ImagLit:
        case TokenKind::CharLit:
        case TokenKind::StringLit:
            return true;
        case TokenKind::Keyword:
            return t.text == "break" || t.text == "continue" || t.text == "fallthrough" ||
                   t.text == "return";
        case TokenKind::Op:
            return t.text == "++" || t.text == "--" || t.text == ")" || t.text == "]" ||
                   t.text == "}";
        default:
            return false;
    }
}

struct Cursor {
    const std::string& text;
    std::size_t pos = 0;
    int line = 1;
    int col = 1;

    bool done() const { return pos >= text.size(); }
    char peek(std::size_t ahead = 0) const {
        return pos + ahead < text.size() ? text[pos + ahead] : '\0';
    }
    void advance() {
        if (text[pos] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
        ++pos;
    }
};

bool is_ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' ||
           static_cast<unsigned char>(c) >= 0x80;
}

bool is_ident_char(char c) {
    return is_ident_start(c) || std::isdigit(static_cast<unsigned char>(c));
}

}  // namespace

bool is_go_keyword(const std::string& word) { return kKeywords.count(word) > 0; }

std::vector<Token> lex(const std::string& text) {
    std::vector<Token> tokens;
    Cursor cur{text};

    auto maybe_insert_semicolon = [&]() {
        if (!tokens.empty() && semicolon_trigger(tokens.back())) {
            Token semi;
            semi.kind = TokenKind::Op;
            semi.text = ";";
            semi.line = cur.line;
            semi.col = cur.col;
            semi.offset = cur.pos;
            semi.end_offset = cur.pos;
            tokens.push_back(semi);
        }
    };

    while (!cur.done()) {
        char c = cur.peek();

        if (c == '\n') {
            maybe_insert_semicolon();
            cur.advance();
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r') {
            cur.advance();
            continue;
        }
        if (c == '/' && cur.peek(1) == '/') {
            while (!cur.done() && cur.peek() != '\n') cur.advance();
            continue;
        }
        if (c == '/' && cur.peek(1) == '*') {
            int start_line = cur.line, start_col = cur.col;
            cur.advance();
            cur.advance();
            bool newline_inside = false, closed = false;
            while (!cur.done()) {
                if (cur.peek() == '\n') newline_inside = true;
                if (cur.peek() == '*' && cur.peek(1) == '/') {
                    cur.advance();
                    cur.advance();
                    closed = true;
                    break;
                }
                cur.advance();
            }
            if (!closed) throw ParseError("unterminated block comment", start_line, start_col);
            if (newline_inside) maybe_insert_semicolon();
            continue;
        }

        Token tok;
        tok.line = cur.line;
        tok.col = cur.col;
        tok.offset = cur.pos;

        if (is_ident_start(c)) {
            std::string word;
            while (!cur.done() && is_ident_char(cur.peek())) {
                word += cur.peek();
                cur.advance();
            }
            tok.kind = kKeywords.count(word) ? TokenKind::Keyword : TokenKind::Ident;
            tok.text = std::move(word);
        } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                   (c == '.' && std::isdigit(static_cast<unsigned char>(cur.peek(1))))) {
            std::string num;
            bool is_float = false;
            if (c == '0' && (cur.peek(1) == 'x' || cur.peek(1) == 'X')) {
                num += cur.peek();
                cur.advance();
                num += cur.peek();
                cur.advance();
                while (!cur.done() && (std::isxdigit(static_cast<unsigned char>(cur.peek())) ||
                                       cur.peek() == '_')) {
                    num += cur.peek();
                    cur.advance();
                }
            } else if (c == '0' && (cur.peek(1) == 'b' || cur.peek(1) == 'B' ||
                                    cur.peek(1) == 'o' || cur.peek(1) == 'O')) {
                num += cur.peek();
                cur.advance();
                num += cur.peek();
                cur.advance();
                while (!cur.done() && (std::isalnum(static_cast<unsigned char>(cur.peek())) ||
                                       cur.peek() == '_')) {
                    num += cur.peek();
                    cur.advance();
                }
            } else {
                while (!cur.done() && (std::isdigit(static_cast<unsigned char>(cur.peek())) ||
                                       cur.peek() == '_')) {
                    num += cur.peek();
                    cur.advance();
                }
                if (cur.peek() == '.' && cur.peek(1) != '.') {
                    is_float = true;
                    num += '.';
                    cur.advance();
                    while (!cur.done() && std::isdigit(static_cast<unsigned char>(cur.peek()))) {
                        num += cur.peek();
                        cur.advance();
                    }
                }
                if (cur.peek() == 'e' || cur.peek() == 'E') {
                    is_float = true;
                    num += cur.peek();
                    cur.advance();
                    if (cur.peek() == '+' || cur.peek() == '-') {
                        num += cur.peek();
                        cur.advance();
                    }
                    while (!cur.done() && std::isdigit(static_cast<unsigned char>(cur.peek()))) {
                        num += cur.peek();
                        cur.advance();
                    }
                }
            }
            if (cur.peek() == 'i') {
                num += 'i';
                cur.advance();
                tok.kind = TokenKind::ImagLit;
            } else {
                tok.kind = is_float ? TokenKind::FloatLit : TokenKind::IntLit;
            }
            tok.text = std::move(num);
        } else if (c == '"') {
            std::string lit = "\"";
            cur.advance();
            bool closed = false;
            while (!cur.done()) {
                char cc = cur.peek();
                if (cc == '\n') break;
                lit += cc;
                if (cc == '\\') {
                    cur.advance();
                    if (cur.done()) break;
                    lit += cur.peek();
                    cur.advance();
                    continue;
                }
                cur.advance();
                if (cc == '"') {
                    closed = true;
                    break;
                }
            }
            if (!closed) throw ParseError("unterminated string literal", tok.line, tok.col);
            tok.kind = TokenKind::StringLit;
            tok.text = std::move(lit);
        } else if (c == '`') {
            std::string lit = "`";
            cur.advance();
            bool closed = false;
            while (!cur.done()) {
                char cc = cur.peek();
                lit += cc;
                cur.advance();
                if (cc == '`') {
                    closed = true;
                    break;
                }
            }
            if (!closed) throw ParseError("unterminated raw string literal", tok.line, tok.col);
            tok.kind = TokenKind::StringLit;
            tok.text = std::move(lit);
        } else if (c == '\'') {
            std::string lit = "'";
            cur.advance();
            bool closed = false;
            while (!cur.done()) {
                char cc = cur.peek();
                if (cc == '\n') break;
                lit += cc;
                if (cc == '\\') {
                    cur.advance();
                    if (cur.done()) break;
                    lit += cur.peek();
                    cur.advance();
                    continue;
                }
                cur.advance();
                if (cc == '\'') {
                    closed = true;
                    break;
                }
            }
            if (!closed) throw ParseError("unterminated rune literal", tok.line, tok.col);
            tok.kind = TokenKind::CharLit;
            tok.text = std::move(lit);
        } else {
            std::string rest = text.substr(cur.pos, 3);
            bool matched = false;
            for (const char* op : kOps3) {
                if (rest.rfind(op, 0) == 0) {
                    tok.kind = TokenKind::Op;
                    tok.text = op;
                    cur.advance();
                    cur.advance();
                    cur.advance();
                    matched = true;
                    break;
                }
            }
            if (!matched) {
                for (const char* op : kOps2) {
                    if (rest.rfind(op, 0) == 0) {
                        tok.kind = TokenKind::Op;
                        tok.text = op;
                        cur.advance();
                        cur.advance();
                        matched = true;
                        break;
                    }
                }
            }
            if (!matched) {
                if (std::string(kOps1).find(c) != std::string::npos) {
                    tok.kind = TokenKind::Op;
                    tok.text = std::string(1, c);
                    cur.advance();
                    matched = true;
                }
            }
            if (!matched) throw ParseError(std::string("unexpected character '") + c + "'", cur.line, cur.col);
        }

        tok.end_offset = cur.pos;
        tokens.push_back(std::move(tok));
    }

    maybe_insert_semicolon();

    Token eof;
    eof.kind = TokenKind::Eof;
    eof.line = cur.line;
    eof.col = cur.col;
    eof.offset = cur.pos;
    eof.end_offset = cur.pos;
    tokens.push_back(eof);
    return tokens;
}

}  // namespace gounsafe
