#include "gounsafe/parser.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

#include "gounsafe/lexer.hpp"

namespace gounsafe {

namespace {

const std::unordered_set<std::string> kBuiltinTypes = {
    "bool", "byte", "complex64", "complex128", "error", "float32", "float64",
    "int", "int8", "int16", "int32", "int64", "rune", "string", "uint",
    "uint8", "uint16", "uint32", "uint64", "uintptr", "any",
};

const std::unordered_set<std::string> kAssignOps = {
    "=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", "&^=",
};

int binary_precedence(const std::string& op) {
    if (op == "||") return 1;
    if (op == "&&") return 2;
    if (op == "==" || op == "!=" || op == "<" || op == "<=" || op == ">" || op == ">=") return 3;
    if (op == "+" || op == "-" || op == "|" || op == "^") return 4;
    if (op == "*" || op == "/" || op == "%" || op == "<<" || op == ">>" || op == "&" || op == "&^")
        return 5;
    return 0;
}

bool is_unary_op(const std::string& op) {
    return op == "+" || op == "-" || op == "!" || op == "^" || op == "*" || op == "&" || op == "<-";
}

// Thrown when a construct cannot be parsed as part of the subset; the
// statement or declaration that raised it is re-emitted as an opaque leaf.
struct Degrade {};

class Parser {
public:
    explicit Parser(SourceUnit& unit) : unit_(unit), tokens_(lex(unit.text)) {
        scan_declared_types();
    }

    std::unique_ptr<AstNode> parse_file();

private:
    SourceUnit& unit_;
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    std::unordered_set<std::string> declared_types_;
    std::unordered_map<std::string, std::string> imports_;
    bool composite_ok_ = true;

    // ==== Token helpers ====

    const Token& cur() const { return tokens_[pos_]; }
    const Token& peek(std::size_t ahead = 1) const {
        return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
    }
    bool at_op(const std::string& text) const {
        return cur().kind == TokenKind::Op && cur().text == text;
    }
    bool at_kw(const std::string& text) const {
        return cur().kind == TokenKind::Keyword && cur().text == text;
    }
    bool at_eof() const { return cur().kind == TokenKind::Eof; }
    const Token& advance() { return tokens_[pos_++]; }
    bool accept_op(const std::string& text) {
        if (!at_op(text)) return false;
        ++pos_;
        return true;
    }
    void expect_op(const std::string& text) {
        if (!accept_op(text)) throw Degrade{};
    }
    void skip_semis() {
        while (at_op(";")) ++pos_;
    }

    static Span token_span(const Token& t) {
        return {t.line, t.col, t.line, t.col + static_cast<int>(t.text.size())};
    }

    void close_span(AstNode* node, std::size_t start_index) {
        const Token& first = tokens_[start_index];
        const Token& last = tokens_[pos_ > start_index ? pos_ - 1 : start_index];
        node->span = {first.line, first.col, last.line,
                      last.col + static_cast<int>(last.text.size())};
    }

    // ==== Setup scans ====

    void scan_declared_types() {
        for (std::size_t i = 0; i + 1 < tokens_.size(); ++i) {
            if (tokens_[i].kind != TokenKind::Keyword || tokens_[i].text != "type") continue;
            if (tokens_[i + 1].kind == TokenKind::Ident) {
                declared_types_.insert(tokens_[i + 1].text);
            } else if (tokens_[i + 1].kind == TokenKind::Op && tokens_[i + 1].text == "(") {
                int depth = 1;
                bool line_start = true;
                for (std::size_t j = i + 2; j < tokens_.size() && depth > 0; ++j) {
                    const Token& t = tokens_[j];
                    if (t.kind == TokenKind::Op && (t.text == "(" || t.text == "[" || t.text == "{"))
                        ++depth;
                    else if (t.kind == TokenKind::Op &&
                             (t.text == ")" || t.text == "]" || t.text == "}"))
                        --depth;
                    if (depth == 1 && line_start && t.kind == TokenKind::Ident)
                        declared_types_.insert(t.text);
                    line_start = t.kind == TokenKind::Op && t.text == ";";
                }
            }
        }
    }

    bool is_type_name(const std::string& name) const {
        return kBuiltinTypes.count(name) > 0 || declared_types_.count(name) > 0;
    }

    // ==== Opaque degradation ====

    std::unique_ptr<AstNode> opaque_from(std::size_t start_index) {
        pos_ = start_index;
        int depth = 0;
        while (!at_eof()) {
            const Token& t = cur();
            if (t.kind == TokenKind::Op) {
                if (t.text == "(" || t.text == "[" || t.text == "{") {
                    ++depth;
                } else if (t.text == ")" || t.text == "]" || t.text == "}") {
                    if (depth == 0) break;
                    --depth;
                } else if (t.text == ";" && depth == 0) {
                    break;
                }
            }
            ++pos_;
        }
        std::size_t end_offset = cur().offset;
        bool consumed_semi = at_op(";");
        if (consumed_semi) ++pos_;

        auto node = std::make_unique<AstNode>(NodeKind::ExprStmt);
        const Token& first = tokens_[start_index];
        std::string raw = unit_.text.substr(first.offset, end_offset - first.offset);
        while (!raw.empty() && (raw.back() == ' ' || raw.back() == '\t' || raw.back() == '\n' ||
                                raw.back() == '\r'))
            raw.pop_back();
        node->text = raw;
        close_span(node.get(), start_index);
        return node;
    }

    // ==== Types ====

    bool at_type_start() const {
        if (at_op("*") || at_op("[") || at_op("(") || at_op("...") || at_op("<-")) return true;
        if (at_kw("map") || at_kw("chan") || at_kw("func") || at_kw("struct") ||
            at_kw("interface"))
            return true;
        return cur().kind == TokenKind::Ident;
    }

    std::string parse_type(std::vector<std::unique_ptr<AstNode>>* fields_out = nullptr) {
        if (accept_op("*")) return "*" + parse_type();
        if (accept_op("...")) return "..." + parse_type();
        if (accept_op("(")) {
            std::string inner = parse_type(fields_out);
            expect_op(")");
            return inner;
        }
        if (accept_op("[")) {
            if (accept_op("]")) return "[]" + parse_type();
            auto len = parse_expr();
            expect_op("]");
            return "[" + print_expr(*len) + "]" + parse_type();
        }
        if (at_kw("map")) {
            advance();
            expect_op("[");
            std::string key = parse_type();
            expect_op("]");
            return "map[" + key + "]" + parse_type();
        }
        if (at_kw("chan")) {
            advance();
            if (accept_op("<-")) return "chan<- " + parse_type();
            return "chan " + parse_type();
        }
        if (at_op("<-")) {
            advance();
            if (!at_kw("chan")) throw Degrade{};
            advance();
            return "<-chan " + parse_type();
        }
        if (at_kw("func")) {
            advance();
            return "func" + parse_func_type_suffix();
        }
        if (at_kw("struct")) {
            advance();
            return parse_struct_type(fields_out);
        }
        if (at_kw("interface")) {
            advance();
            return parse_interface_type();
        }
        if (cur().kind == TokenKind::Ident) {
            std::string name = advance().text;
            if (at_op(".") && peek().kind == TokenKind::Ident) {
                advance();
                name += "." + advance().text;
            }
            return name;
        }
        throw Degrade{};
    }

    std::string parse_func_type_suffix() {
        expect_op("(");
        std::string sig = "(";
        bool first = true;
        while (!at_op(")") && !at_eof()) {
            if (!first) {
                expect_op(",");
                sig += ", ";
            }
            first = false;
            // Parameter names are optional in func types; skip "name type".
            if (cur().kind == TokenKind::Ident && peek().kind != TokenKind::Op) {
                advance();
            } else if (cur().kind == TokenKind::Ident &&
                       (peek().text != "," && peek().text != ")" && peek().text != ".")) {
                advance();
            }
            sig += parse_type();
        }
        expect_op(")");
        sig += ")";
        if (at_op("(")) {
            advance();
            sig += " (";
            bool f2 = true;
            while (!at_op(")") && !at_eof()) {
                if (!f2) {
                    expect_op(",");
                    sig += ", ";
                }
                f2 = false;
                sig += parse_type();
            }
            expect_op(")");
            sig += ")";
        } else if (at_type_start() && !at_op("(")) {
            sig += " " + parse_type();
        }
        return sig;
    }

    std::string parse_struct_type(std::vector<std::unique_ptr<AstNode>>* fields_out) {
        expect_op("{");
        skip_semis();
        std::string text = "struct {";
        bool any = false;
        while (!at_op("}") && !at_eof()) {
            std::vector<std::string> names;
            std::string type;
            if (cur().kind == TokenKind::Ident &&
                (peek().text == "," ||
                 (peek().kind != TokenKind::Op || peek().text == "*" || peek().text == "[" ||
                  peek().text == "(") ||
                 peek().kind == TokenKind::Keyword)) {
                // Named field(s): ident {"," ident} type
                names.push_back(advance().text);
                while (accept_op(",")) {
                    if (cur().kind != TokenKind::Ident) throw Degrade{};
                    names.push_back(advance().text);
                }
                type = parse_type();
            } else {
                // Embedded field
                type = parse_type();
            }
            if (cur().kind == TokenKind::StringLit) advance();  // field tag, dropped

            if (names.empty()) names.push_back("");
            for (const std::string& name : names) {
                text += any ? "; " : " ";
                any = true;
                if (!name.empty()) text += name + " ";
                text += type;
                if (fields_out) {
                    auto field = std::make_unique<AstNode>(NodeKind::Field);
                    field->text = name;
                    field->resolved_type = type;
                    field->span = token_span(tokens_[pos_ - 1]);
                    fields_out->push_back(std::move(field));
                }
            }
            if (!at_op("}")) expect_op(";");
            skip_semis();
        }
        expect_op("}");
        text += any ? " }" : "}";
        return text;
    }

    std::string parse_interface_type() {
        expect_op("{");
        std::string text = "interface {";
        int depth = 1;
        std::string prev;
        while (depth > 0 && !at_eof()) {
            const Token& t = advance();
            if (t.kind == TokenKind::Op) {
                if (t.text == "{" || t.text == "(" || t.text == "[") ++depth;
                if (t.text == "}" || t.text == ")" || t.text == "]") {
                    --depth;
                    if (depth == 0) break;
                }
            }
            if (!text.empty() && text.back() != '{' && t.text != ";") text += " ";
            if (t.text != ";" || prev == ";") text += t.text == ";" ? ";" : t.text;
            prev = t.text;
        }
        text += text.back() == '{' ? "}" : " }";
        return text;
    }

    // ==== Expressions ====

    std::unique_ptr<AstNode> parse_expr() { return parse_binary(1); }

    std::unique_ptr<AstNode> parse_binary(int min_prec) {
        std::size_t start = pos_;
        auto left = parse_unary();
        while (cur().kind == TokenKind::Op) {
            int prec = binary_precedence(cur().text);
            if (prec < min_prec || prec == 0) break;
            std::string op = advance().text;
            auto right = parse_binary(prec + 1);
            auto node = std::make_unique<AstNode>(NodeKind::BinaryOp);
            node->text = op;
            node->add_child(std::move(left));
            node->add_child(std::move(right));
            close_span(node.get(), start);
            left = std::move(node);
        }
        return left;
    }

    std::unique_ptr<AstNode> parse_unary() {
        if (cur().kind == TokenKind::Op && is_unary_op(cur().text)) {
            std::size_t start = pos_;
            std::string op = advance().text;
            auto operand = parse_unary();
            auto node = std::make_unique<AstNode>(NodeKind::UnaryOp);
            node->text = op;
            node->add_child(std::move(operand));
            close_span(node.get(), start);
            return node;
        }
        return parse_primary();
    }

    std::unique_ptr<AstNode> parse_primary() {
        std::size_t start = pos_;
        auto node = parse_operand();
        for (;;) {
            if (at_op(".") && peek().kind == TokenKind::Ident) {
                advance();
                auto sel = std::make_unique<AstNode>(NodeKind::SelectorChain);
                sel->text = advance().text;
                if (node->kind == NodeKind::Identifier) {
                    auto it = imports_.find(node->text);
                    if (it != imports_.end()) sel->resolved_package = it->second;
                }
                sel->add_child(std::move(node));
                close_span(sel.get(), start);
                node = std::move(sel);
            } else if (at_op(".") && peek().kind == TokenKind::Op && peek().text == "(") {
                advance();
                advance();
                if (at_kw("type")) throw Degrade{};  // type switches stay out of the subset
                std::string type = parse_type();
                expect_op(")");
                auto assert_node = std::make_unique<AstNode>(NodeKind::Cast);
                assert_node->detail = "assert";
                assert_node->resolved_type = type;
                assert_node->add_child(std::move(node));
                close_span(assert_node.get(), start);
                node = std::move(assert_node);
            } else if (at_op("(")) {
                advance();
                std::string cast_type = callee_type_text(*node);
                std::vector<std::unique_ptr<AstNode>> call_args;
                bool saved = composite_ok_;
                composite_ok_ = true;
                while (!at_op(")") && !at_eof()) {
                    call_args.push_back(parse_expr());
                    if (!accept_op(",")) break;
                }
                composite_ok_ = saved;
                expect_op(")");
                if (!cast_type.empty() && call_args.size() == 1) {
                    auto cast = std::make_unique<AstNode>(NodeKind::Cast);
                    cast->resolved_type = cast_type;
                    cast->resolved_package = node->resolved_package;
                    cast->add_child(std::move(call_args[0]));
                    close_span(cast.get(), start);
                    node = std::move(cast);
                } else {
                    auto call = std::make_unique<AstNode>(NodeKind::Call);
                    call->text = callee_name(*node);
                    call->resolved_package = node->resolved_package;
                    call->add_child(std::move(node));
                    for (auto& a : call_args) call->add_child(std::move(a));
                    close_span(call.get(), start);
                    node = std::move(call);
                }
            } else if (at_op("[")) {
                advance();
                auto idx = std::make_unique<AstNode>(NodeKind::Index);
                idx->add_child(std::move(node));
                bool saved = composite_ok_;
                composite_ok_ = true;
                if (!at_op(":")) idx->add_child(parse_expr());
                while (accept_op(":")) {
                    idx->detail = "slice";
                    if (!at_op("]") && !at_op(":")) idx->add_child(parse_expr());
                }
                composite_ok_ = saved;
                expect_op("]");
                close_span(idx.get(), start);
                node = std::move(idx);
            } else if (at_op("{") && composite_ok_ && composite_allowed(*node)) {
                node = parse_composite_body(composite_type_text(*node), start);
            } else {
                break;
            }
        }
        return node;
    }

    std::unique_ptr<AstNode> parse_operand() {
        std::size_t start = pos_;
        const Token& t = cur();
        switch (t.kind) {
            case TokenKind::IntLit:
            case TokenKind::FloatLit:
            case TokenKind::ImagLit:
            case TokenKind::CharLit:
            case TokenKind::StringLit: {
                auto lit = std::make_unique<AstNode>(NodeKind::Literal);
                lit->text = advance().text;
                lit->detail = t.kind == TokenKind::IntLit     ? "int"
                              : t.kind == TokenKind::FloatLit ? "float"
                              : t.kind == TokenKind::ImagLit  ? "imag"
                              : t.kind == TokenKind::CharLit  ? "char"
                                                              : "string";
                lit->span = token_span(t);
                return lit;
            }
            case TokenKind::Ident: {
                auto ident = std::make_unique<AstNode>(NodeKind::Identifier);
                ident->text = advance().text;
                ident->span = token_span(t);
                return ident;
            }
            case TokenKind::Keyword:
                if (t.text == "func") return parse_func_literal();
                if (t.text == "map" || t.text == "chan" || t.text == "struct" ||
                    t.text == "interface") {
                    std::string type = parse_type();
                    return parse_type_operand(type, start);
                }
                throw Degrade{};
            case TokenKind::Op:
                if (t.text == "(") {
                    std::size_t save = pos_;
                    advance();
                    bool saved = composite_ok_;
                    composite_ok_ = true;
                    try {
                        auto inner = parse_expr();
                        composite_ok_ = saved;
                        expect_op(")");
                        return inner;
                    } catch (const Degrade&) {
                        // Parenthesized type in a conversion, e.g. ([]byte)(s).
                        composite_ok_ = saved;
                        pos_ = save + 1;
                        std::string type = parse_type();
                        expect_op(")");
                        if (!at_op("(")) throw Degrade{};
                        return parse_type_operand(type, save);
                    }
                }
                if (t.text == "[") {
                    std::string type = parse_type();
                    return parse_type_operand(type, start);
                }
                throw Degrade{};
            default:
                throw Degrade{};
        }
    }

    // A non-identifier type expression used as an operand must be followed by
    // a conversion or a composite literal.
    std::unique_ptr<AstNode> parse_type_operand(const std::string& type, std::size_t start) {
        if (at_op("(")) {
            advance();
            bool saved = composite_ok_;
            composite_ok_ = true;
            auto operand = parse_expr();
            composite_ok_ = saved;
            expect_op(")");
            auto cast = std::make_unique<AstNode>(NodeKind::Cast);
            cast->resolved_type = type;
            cast->add_child(std::move(operand));
            close_span(cast.get(), start);
            return cast;
        }
        if (at_op("{")) return parse_composite_body(type, start);
        // Bare type used as an argument, as in make([]int, 4) or new(T).
        auto bare = std::make_unique<AstNode>(NodeKind::Literal);
        bare->detail = "type";
        bare->text = type;
        bare->resolved_type = type;
        close_span(bare.get(), start);
        return bare;
    }

    std::unique_ptr<AstNode> parse_composite_body(const std::string& type, std::size_t start) {
        expect_op("{");
        auto lit = std::make_unique<AstNode>(NodeKind::CompositeLiteral);
        lit->resolved_type = type;
        bool saved = composite_ok_;
        composite_ok_ = true;
        skip_semis();
        while (!at_op("}") && !at_eof()) {
            auto elem = parse_expr();
            if (accept_op(":")) {
                auto kv = std::make_unique<AstNode>(NodeKind::KeyValue);
                kv->add_child(std::move(elem));
                kv->add_child(parse_expr());
                lit->add_child(std::move(kv));
            } else {
                lit->add_child(std::move(elem));
            }
            if (!accept_op(",")) break;
            skip_semis();
        }
        skip_semis();
        composite_ok_ = saved;
        expect_op("}");
        close_span(lit.get(), start);
        return lit;
    }

    std::unique_ptr<AstNode> parse_func_literal() {
        std::size_t start = pos_;
        advance();  // func
        int depth = 0;
        bool seen_body = false;
        while (!at_eof()) {
            const Token& t = cur();
            if (t.kind == TokenKind::Op) {
                if (t.text == "(" || t.text == "[") ++depth;
                if (t.text == ")" || t.text == "]") --depth;
                if (t.text == "{") {
                    ++depth;
                    seen_body = true;
                }
                if (t.text == "}") {
                    --depth;
                    if (seen_body && depth == 0) {
                        ++pos_;
                        break;
                    }
                }
            }
            ++pos_;
        }
        auto lit = std::make_unique<AstNode>(NodeKind::Literal);
        lit->detail = "func";
        const Token& first = tokens_[start];
        const Token& last = tokens_[pos_ - 1];
        lit->text = unit_.text.substr(first.offset, last.end_offset - first.offset);
        close_span(lit.get(), start);
        return lit;
    }

    bool is_unsafe_selector(const AstNode& node) const {
        if (node.kind != NodeKind::SelectorChain || node.children.empty()) return false;
        const AstNode& base = *node.children[0];
        if (base.kind != NodeKind::Identifier) return false;
        auto it = imports_.find(base.text);
        return (it != imports_.end() && it->second == "unsafe") ||
               (it == imports_.end() && base.text == "unsafe");
    }

    // Returns the canonical type text when the expression is type-shaped and
    // usable as a conversion target; empty string otherwise.
    std::string callee_type_text(const AstNode& node) const {
        switch (node.kind) {
            case NodeKind::Identifier:
                return is_type_name(node.text) ? node.text : "";
            case NodeKind::SelectorChain:
                if (is_unsafe_selector(node) && node.text == "Pointer") return "unsafe.Pointer";
                return "";
            case NodeKind::UnaryOp: {
                if (node.text != "*") return "";
                const AstNode& inner = *node.children[0];
                if (inner.kind == NodeKind::Identifier) return "*" + inner.text;
                if (inner.kind == NodeKind::SelectorChain &&
                    inner.children[0]->kind == NodeKind::Identifier)
                    return "*" + inner.children[0]->text + "." + inner.text;
                return "";
            }
            default:
                return "";
        }
    }

    static std::string callee_name(const AstNode& node) {
        switch (node.kind) {
            case NodeKind::Identifier:
                return node.text;
            case NodeKind::SelectorChain: {
                std::string base = callee_name(*node.children[0]);
                return base.empty() ? node.text : base + "." + node.text;
            }
            default:
                return "";
        }
    }

    bool composite_allowed(const AstNode& node) const {
        if (node.kind == NodeKind::Identifier)
            return is_type_name(node.text) ||
                   (!node.text.empty() && std::isupper(static_cast<unsigned char>(node.text[0])));
        return node.kind == NodeKind::SelectorChain &&
               node.children[0]->kind == NodeKind::Identifier;
    }

    static std::string composite_type_text(const AstNode& node) {
        if (node.kind == NodeKind::Identifier) return node.text;
        return node.children[0]->text + "." + node.text;
    }

    // ==== Statements ====

    std::vector<std::unique_ptr<AstNode>> parse_expr_list() {
        std::vector<std::unique_ptr<AstNode>> list;
        list.push_back(parse_expr());
        while (accept_op(",")) list.push_back(parse_expr());
        return list;
    }

    std::unique_ptr<AstNode> parse_block() {
        std::size_t start = pos_;
        expect_op("{");
        auto block = std::make_unique<AstNode>(NodeKind::Block);
        skip_semis();
        while (!at_op("}") && !at_eof()) {
            parse_statement_into(block->children);
            skip_semis();
        }
        expect_op("}");
        close_span(block.get(), start);
        return block;
    }

    void parse_statement_into(std::vector<std::unique_ptr<AstNode>>& out) {
        std::size_t start = pos_;
        try {
            parse_statement(out);
        } catch (const Degrade&) {
            out.push_back(opaque_from(start));
        }
    }

    void parse_statement(std::vector<std::unique_ptr<AstNode>>& out) {
        if (at_kw("var") || at_kw("const")) {
            parse_var_decl(out, NodeKind::Declaration);
            return;
        }
        if (at_kw("if")) {
            out.push_back(parse_if());
            return;
        }
        if (at_kw("for")) {
            out.push_back(parse_for());
            return;
        }
        if (at_kw("switch")) {
            out.push_back(parse_switch());
            return;
        }
        if (at_kw("select")) {
            out.push_back(parse_select());
            return;
        }
        if (at_kw("return")) {
            std::size_t start = pos_;
            advance();
            auto ret = std::make_unique<AstNode>(NodeKind::Return);
            if (!at_op(";") && !at_op("}")) {
                auto exprs = parse_expr_list();
                for (auto& e : exprs) ret->add_child(std::move(e));
            }
            close_span(ret.get(), start);
            out.push_back(std::move(ret));
            return;
        }
        if (at_kw("defer") || at_kw("go")) {
            std::size_t start = pos_;
            bool is_defer = advance().text == "defer";
            auto node = std::make_unique<AstNode>(is_defer ? NodeKind::DeferStmt : NodeKind::GoStmt);
            node->add_child(parse_expr());
            close_span(node.get(), start);
            out.push_back(std::move(node));
            return;
        }
        if (at_op("{")) {
            out.push_back(parse_block());
            return;
        }
        if (at_kw("break") || at_kw("continue") || at_kw("goto") || at_kw("fallthrough"))
            throw Degrade{};
        if (cur().kind == TokenKind::Ident && peek().kind == TokenKind::Op && peek().text == ":")
            throw Degrade{};  // labeled statement
        out.push_back(parse_simple_stmt());
    }

    std::unique_ptr<AstNode> parse_simple_stmt() {
        std::size_t start = pos_;
        auto lhs = parse_expr_list();

        if (at_op(":=")) {
            advance();
            auto node = std::make_unique<AstNode>(NodeKind::ShortVarDecl);
            node->aux = static_cast<int>(lhs.size());
            for (auto& e : lhs) {
                if (e->kind != NodeKind::Identifier) throw Degrade{};
                node->add_child(std::move(e));
            }
            auto rhs = parse_expr_list();
            if (rhs.size() == 1) node->resolved_type = infer_expr_type(*rhs[0]);
            for (auto& e : rhs) node->add_child(std::move(e));
            close_span(node.get(), start);
            return node;
        }
        if (cur().kind == TokenKind::Op && kAssignOps.count(cur().text)) {
            std::string op = advance().text;
            auto node = std::make_unique<AstNode>(NodeKind::Assign);
            node->text = op;
            node->aux = static_cast<int>(lhs.size());
            for (auto& e : lhs) node->add_child(std::move(e));
            auto rhs = parse_expr_list();
            for (auto& e : rhs) node->add_child(std::move(e));
            close_span(node.get(), start);
            return node;
        }
        if (at_op("++") || at_op("--")) {
            std::string op = advance().text;
            auto node = std::make_unique<AstNode>(NodeKind::Assign);
            node->text = op;
            node->aux = 1;
            if (lhs.size() != 1) throw Degrade{};
            node->add_child(std::move(lhs[0]));
            close_span(node.get(), start);
            return node;
        }
        if (at_op("<-")) {
            advance();
            auto send = std::make_unique<AstNode>(NodeKind::BinaryOp);
            send->text = "<-";
            if (lhs.size() != 1) throw Degrade{};
            send->add_child(std::move(lhs[0]));
            send->add_child(parse_expr());
            auto stmt = std::make_unique<AstNode>(NodeKind::ExprStmt);
            stmt->add_child(std::move(send));
            close_span(stmt.get(), start);
            return stmt;
        }
        if (lhs.size() != 1) throw Degrade{};
        auto stmt = std::make_unique<AstNode>(NodeKind::ExprStmt);
        stmt->add_child(std::move(lhs[0]));
        close_span(stmt.get(), start);
        return stmt;
    }

    std::string infer_expr_type(const AstNode& e) const {
        switch (e.kind) {
            case NodeKind::Cast:
                return e.resolved_type;
            case NodeKind::CompositeLiteral:
                return e.resolved_type;
            case NodeKind::Literal:
                if (e.detail == "int") return "int";
                if (e.detail == "float") return "float64";
                if (e.detail == "string") return "string";
                if (e.detail == "char") return "rune";
                return "";
            case NodeKind::UnaryOp:
                if (e.text == "&") {
                    std::string inner = infer_expr_type(*e.children[0]);
                    return inner.empty() ? "" : "*" + inner;
                }
                return "";
            default:
                return "";
        }
    }

    std::unique_ptr<AstNode> parse_if() {
        std::size_t start = pos_;
        advance();  // if
        auto node = std::make_unique<AstNode>(NodeKind::If);
        bool saved = composite_ok_;
        composite_ok_ = false;

        auto first = parse_simple_stmt();
        if (accept_op(";")) {
            node->detail += "i";
            node->add_child(std::move(first));
            node->add_child(parse_expr());
        } else {
            if (first->kind != NodeKind::ExprStmt || first->children.empty()) throw Degrade{};
            node->add_child(std::move(first->children[0]));
        }
        composite_ok_ = saved;

        node->add_child(parse_block());
        if (at_kw("else")) {
            advance();
            node->detail += "e";
            if (at_kw("if")) {
                node->add_child(parse_if());
            } else {
                node->add_child(parse_block());
            }
        }
        close_span(node.get(), start);
        return node;
    }

    std::unique_ptr<AstNode> parse_for() {
        std::size_t start = pos_;
        advance();  // for
        auto node = std::make_unique<AstNode>(NodeKind::For);
        bool saved = composite_ok_;
        composite_ok_ = false;

        if (at_op("{")) {
            composite_ok_ = saved;
            node->add_child(parse_block());
            close_span(node.get(), start);
            return node;
        }
        if (at_kw("range")) {
            advance();
            node->detail = "r";
            node->aux = 0;
            node->add_child(parse_expr());
            composite_ok_ = saved;
            node->add_child(parse_block());
            close_span(node.get(), start);
            return node;
        }

        // Decide between the three-part form and condition/range forms by
        // scanning for a ';' before the body '{' at bracket depth zero.
        bool three_part = at_op(";");
        if (!three_part) {
            int depth = 0;
            for (std::size_t i = pos_; i < tokens_.size(); ++i) {
                const Token& t = tokens_[i];
                if (t.kind != TokenKind::Op) continue;
                if (t.text == "(" || t.text == "[") ++depth;
                if (t.text == ")" || t.text == "]") --depth;
                if (depth == 0 && t.text == "{") break;
                if (depth == 0 && t.text == ";") {
                    three_part = true;
                    break;
                }
            }
        }

        if (three_part) {
            node->detail = "3";
            if (at_op(";"))
                node->add_child(std::make_unique<AstNode>(NodeKind::Empty));
            else
                node->add_child(parse_simple_stmt());
            expect_op(";");
            if (at_op(";"))
                node->add_child(std::make_unique<AstNode>(NodeKind::Empty));
            else
                node->add_child(parse_expr());
            expect_op(";");
            if (at_op("{"))
                node->add_child(std::make_unique<AstNode>(NodeKind::Empty));
            else
                node->add_child(parse_simple_stmt());
        } else {
            auto exprs = parse_expr_list();
            if ((at_op(":=") || at_op("=")) ) {
                std::string op = advance().text;
                if (!at_kw("range")) throw Degrade{};
                advance();
                node->detail = "r";
                node->text = op;
                node->aux = static_cast<int>(exprs.size());
                for (auto& e : exprs) node->add_child(std::move(e));
                node->add_child(parse_expr());
            } else {
                if (exprs.size() != 1) throw Degrade{};
                node->detail = "c";
                node->add_child(std::move(exprs[0]));
            }
        }
        composite_ok_ = saved;
        node->add_child(parse_block());
        close_span(node.get(), start);
        return node;
    }

    std::unique_ptr<AstNode> parse_switch() {
        std::size_t start = pos_;
        advance();  // switch
        auto node = std::make_unique<AstNode>(NodeKind::Switch);
        bool saved = composite_ok_;
        composite_ok_ = false;

        if (!at_op("{")) {
            auto first = parse_simple_stmt();
            if (accept_op(";")) {
                node->detail += "i";
                node->add_child(std::move(first));
                if (!at_op("{")) {
                    node->detail += "t";
                    node->add_child(parse_expr());
                }
            } else {
                if (first->kind != NodeKind::ExprStmt || first->children.empty()) throw Degrade{};
                node->detail += "t";
                node->add_child(std::move(first->children[0]));
            }
        }
        composite_ok_ = saved;

        expect_op("{");
        skip_semis();
        while (!at_op("}") && !at_eof()) {
            node->add_child(parse_case_clause(false));
            skip_semis();
        }
        expect_op("}");
        close_span(node.get(), start);
        return node;
    }

    std::unique_ptr<AstNode> parse_select() {
        std::size_t start = pos_;
        advance();  // select
        auto node = std::make_unique<AstNode>(NodeKind::Select);
        expect_op("{");
        skip_semis();
        while (!at_op("}") && !at_eof()) {
            node->add_child(parse_case_clause(true));
            skip_semis();
        }
        expect_op("}");
        close_span(node.get(), start);
        return node;
    }

    std::unique_ptr<AstNode> parse_case_clause(bool comm) {
        std::size_t start = pos_;
        auto clause = std::make_unique<AstNode>(NodeKind::CaseClause);
        if (at_kw("default")) {
            advance();
            expect_op(":");
            clause->aux = 0;
        } else if (at_kw("case")) {
            advance();
            if (comm) {
                clause->aux = 1;
                clause->add_child(parse_simple_stmt());
            } else {
                auto exprs = parse_expr_list();
                clause->aux = static_cast<int>(exprs.size());
                for (auto& e : exprs) clause->add_child(std::move(e));
            }
            expect_op(":");
        } else {
            throw Degrade{};
        }
        skip_semis();
        while (!at_op("}") && !at_kw("case") && !at_kw("default") && !at_eof()) {
            parse_statement_into(clause->children);
            skip_semis();
        }
        close_span(clause.get(), start);
        return clause;
    }

    // ==== Declarations ====

    void parse_var_decl(std::vector<std::unique_ptr<AstNode>>& out, NodeKind kind) {
        bool is_const = advance().text == "const";
        if (accept_op("(")) {
            skip_semis();
            while (!at_op(")") && !at_eof()) {
                out.push_back(parse_var_spec(kind, is_const));
                skip_semis();
            }
            expect_op(")");
            return;
        }
        out.push_back(parse_var_spec(kind, is_const));
    }

    std::unique_ptr<AstNode> parse_var_spec(NodeKind kind, bool is_const) {
        std::size_t start = pos_;
        auto node = std::make_unique<AstNode>(kind);
        node->detail = is_const ? "const" : "var";

        std::vector<std::string> names;
        if (cur().kind != TokenKind::Ident) throw Degrade{};
        names.push_back(advance().text);
        while (accept_op(",")) {
            if (cur().kind != TokenKind::Ident) throw Degrade{};
            names.push_back(advance().text);
        }
        node->aux = static_cast<int>(names.size());
        for (const std::string& n : names) {
            auto ident = std::make_unique<AstNode>(NodeKind::Identifier);
            ident->text = n;
            ident->span = node->span;
            node->add_child(std::move(ident));
        }

        if (!at_op("=") && !at_op(";") && !at_op(")") && !at_eof())
            node->resolved_type = parse_type();
        if (accept_op("=")) {
            auto inits = parse_expr_list();
            if (node->resolved_type.empty() && inits.size() == 1)
                node->resolved_type = infer_expr_type(*inits[0]);
            for (auto& e : inits) node->add_child(std::move(e));
        }
        close_span(node.get(), start);
        for (int i = 0; i < node->aux; ++i) node->children[i]->span = node->span;
        return node;
    }

    std::unique_ptr<AstNode> parse_type_decl_spec() {
        std::size_t start = pos_;
        auto node = std::make_unique<AstNode>(NodeKind::TypeDecl);
        if (cur().kind != TokenKind::Ident) throw Degrade{};
        node->text = advance().text;
        accept_op("=");  // alias declarations keep the same shape
        std::vector<std::unique_ptr<AstNode>> fields;
        node->resolved_type = parse_type(&fields);
        for (auto& f : fields) node->add_child(std::move(f));
        close_span(node.get(), start);
        return node;
    }

    std::unique_ptr<AstNode> parse_function_decl() {
        std::size_t start = pos_;
        advance();  // func
        auto node = std::make_unique<AstNode>(NodeKind::FunctionDecl);

        if (accept_op("(")) {
            auto recv = std::make_unique<AstNode>(NodeKind::Field);
            recv->detail = "receiver";
            if (cur().kind == TokenKind::Ident && !at_receiver_type_only()) recv->text = advance().text;
            recv->resolved_type = parse_type();
            recv->span = token_span(tokens_[pos_ - 1]);
            expect_op(")");
            node->add_child(std::move(recv));
        }

        if (cur().kind != TokenKind::Ident) throw Degrade{};
        node->text = advance().text;

        parse_param_list(*node, "param");
        if (at_op("(")) {
            parse_param_list(*node, "result");
        } else if (!at_op("{") && at_type_start()) {
            auto res = std::make_unique<AstNode>(NodeKind::Field);
            res->detail = "result";
            res->resolved_type = parse_type();
            res->span = token_span(tokens_[pos_ - 1]);
            node->add_child(std::move(res));
        }

        node->add_child(parse_block());
        close_span(node.get(), start);
        return node;
    }

    bool at_receiver_type_only() const {
        // "(T)" or "(*T)": the single token chain is the type, not a name.
        const Token& next = peek();
        return next.kind == TokenKind::Op && (next.text == ")" || next.text == ".");
    }

    void parse_param_list(AstNode& fn, const std::string& role) {
        expect_op("(");
        struct Chunk {
            std::string name;
            std::string type;
        };
        std::vector<Chunk> chunks;
        while (!at_op(")") && !at_eof()) {
            Chunk chunk;
            if (cur().kind == TokenKind::Ident) {
                const Token& next = peek();
                bool bare = next.kind == TokenKind::Op && (next.text == "," || next.text == ")");
                bool qualified = next.kind == TokenKind::Op && next.text == ".";
                if (bare) {
                    chunk.name = advance().text;
                } else if (qualified) {
                    chunk.type = parse_type();
                } else {
                    chunk.name = advance().text;
                    chunk.type = parse_type();
                }
            } else {
                chunk.type = parse_type();
            }
            chunks.push_back(std::move(chunk));
            if (!accept_op(",")) break;
        }
        expect_op(")");

        bool any_typed = false;
        for (const Chunk& c : chunks)
            if (!c.type.empty() && !c.name.empty()) any_typed = true;

        if (any_typed) {
            // Bare identifiers are names sharing the next chunk's type.
            std::string carry;
            for (auto it = chunks.rbegin(); it != chunks.rend(); ++it) {
                if (!it->type.empty())
                    carry = it->type;
                else
                    it->type = carry;
            }
        } else {
            // No named chunk: every bare identifier is an unnamed type.
            for (Chunk& c : chunks)
                if (c.type.empty()) {
                    c.type = c.name;
                    c.name.clear();
                }
        }

        for (const Chunk& c : chunks) {
            auto field = std::make_unique<AstNode>(NodeKind::Field);
            field->detail = role;
            field->text = c.name;
            field->resolved_type = c.type;
            field->span = token_span(tokens_[pos_ - 1]);
            fn.add_child(std::move(field));
        }
    }

    void parse_import_decl(std::vector<std::unique_ptr<AstNode>>& out) {
        advance();  // import
        if (accept_op("(")) {
            skip_semis();
            while (!at_op(")") && !at_eof()) {
                out.push_back(parse_import_spec());
                skip_semis();
            }
            expect_op(")");
            return;
        }
        out.push_back(parse_import_spec());
    }

    std::unique_ptr<AstNode> parse_import_spec() {
        std::size_t start = pos_;
        auto node = std::make_unique<AstNode>(NodeKind::Import);
        if (cur().kind == TokenKind::Ident || at_op(".")) node->detail = advance().text;
        if (cur().kind != TokenKind::StringLit) throw Degrade{};
        std::string quoted = advance().text;
        node->text = quoted.size() >= 2 ? quoted.substr(1, quoted.size() - 2) : quoted;
        node->resolved_package = node->text;

        std::string local = node->detail;
        if (local.empty() || local == ".") {
            auto slash = node->text.rfind('/');
            local = slash == std::string::npos ? node->text : node->text.substr(slash + 1);
        }
        if (local != "_") imports_[local] = node->text;
        close_span(node.get(), start);
        return node;
    }
};

std::unique_ptr<AstNode> Parser::parse_file() {
    auto root = std::make_unique<AstNode>(NodeKind::File);
    skip_semis();
    if (!at_kw("package") || peek().kind != TokenKind::Ident)
        throw ParseError("missing package clause", cur().line, cur().col);
    advance();
    root->text = advance().text;
    unit_.package_name = root->text;
    skip_semis();

    while (!at_eof()) {
        std::size_t start = pos_;
        try {
            if (at_kw("import")) {
                parse_import_decl(root->children);
            } else if (at_kw("func")) {
                root->add_child(parse_function_decl());
            } else if (at_kw("type")) {
                advance();
                if (accept_op("(")) {
                    skip_semis();
                    while (!at_op(")") && !at_eof()) {
                        root->add_child(parse_type_decl_spec());
                        skip_semis();
                    }
                    expect_op(")");
                } else {
                    root->add_child(parse_type_decl_spec());
                }
            } else if (at_kw("var") || at_kw("const")) {
                parse_var_decl(root->children, NodeKind::GlobalVarDecl);
            } else {
                throw Degrade{};
            }
        } catch (const Degrade&) {
            root->children.push_back(opaque_from(start));
        }
        skip_semis();
    }

    if (!root->children.empty()) {
        root->span = {1, 1, root->children.back()->span.end_line,
                      root->children.back()->span.end_col};
    } else {
        root->span = {1, 1, tokens_.back().line, tokens_.back().col};
    }
    return root;
}

}  // namespace

std::unique_ptr<AstNode> parse_source(SourceUnit& unit) {
    if (unit.text.empty()) throw ParseError("empty source", 1, 1);
    Parser parser(unit);
    return parser.parse_file();
}

}  // namespace gounsafe
