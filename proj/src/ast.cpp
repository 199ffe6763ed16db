#include "gounsafe/ast.hpp"

namespace gounsafe {

namespace {

bool is_primary(const AstNode& n) {
    switch (n.kind) {
        case NodeKind::Identifier:
        case NodeKind::Literal:
        case NodeKind::SelectorChain:
        case NodeKind::Call:
        case NodeKind::Cast:
        case NodeKind::CompositeLiteral:
        case NodeKind::Index:
            return true;
        default:
            return false;
    }
}

bool type_needs_parens(const std::string& type) {
    if (type.empty()) return false;
    char c = type[0];
    return c == '*' || c == '[' || c == '<' || type.find(' ') != std::string::npos;
}

struct Printer {
    std::string out;
    int indent = 0;

    void pad() { out.append(static_cast<std::size_t>(indent), '\t'); }

    void expr(const AstNode& n) {
        switch (n.kind) {
            case NodeKind::Identifier:
            case NodeKind::Literal:
                out += n.text;
                break;
            case NodeKind::SelectorChain:
                sub_primary(*n.children[0]);
                out += ".";
                out += n.text;
                break;
            case NodeKind::Call:
                sub_primary(*n.children[0]);
                out += "(";
                args(n, 1);
                out += ")";
                break;
            case NodeKind::Cast:
                if (n.detail == "assert") {
                    sub_primary(*n.children[0]);
                    out += ".(" + n.resolved_type + ")";
                } else {
                    if (type_needs_parens(n.resolved_type))
                        out += "(" + n.resolved_type + ")";
                    else
                        out += n.resolved_type;
                    out += "(";
                    expr(*n.children[0]);
                    out += ")";
                }
                break;
            case NodeKind::UnaryOp:
                out += "(" + n.text;
                expr(*n.children[0]);
                out += ")";
                break;
            case NodeKind::BinaryOp:
                out += "(";
                expr(*n.children[0]);
                out += " " + n.text + " ";
                expr(*n.children[1]);
                out += ")";
                break;
            case NodeKind::CompositeLiteral:
                out += n.resolved_type;
                out += "{";
                args(n, 0);
                out += "}";
                break;
            case NodeKind::Index:
                sub_primary(*n.children[0]);
                out += "[";
                for (std::size_t i = 1; i < n.children.size(); ++i) {
                    if (i > 1) out += n.detail == "slice" ? ":" : ", ";
                    expr(*n.children[i]);
                }
                out += "]";
                break;
            case NodeKind::KeyValue:
                expr(*n.children[0]);
                out += ": ";
                expr(*n.children[1]);
                break;
            case NodeKind::Empty:
                break;
            default:
                out += n.text;
                break;
        }
    }

    void sub_primary(const AstNode& n) {
        if (is_primary(n)) {
            expr(n);
        } else {
            out += "(";
            expr(n);
            out += ")";
        }
    }

    void args(const AstNode& n, std::size_t from) {
        for (std::size_t i = from; i < n.children.size(); ++i) {
            if (i > from) out += ", ";
            expr(*n.children[i]);
        }
    }

    void expr_list(const AstNode& n, std::size_t from, std::size_t count) {
        for (std::size_t i = 0; i < count; ++i) {
            if (i) out += ", ";
            expr(*n.children[from + i]);
        }
    }

    void simple_stmt(const AstNode& n) {
        switch (n.kind) {
            case NodeKind::ShortVarDecl: {
                auto lhs = static_cast<std::size_t>(n.aux);
                expr_list(n, 0, lhs);
                out += " := ";
                expr_list(n, lhs, n.children.size() - lhs);
                break;
            }
            case NodeKind::Assign: {
                auto lhs = static_cast<std::size_t>(n.aux);
                if (n.text == "++" || n.text == "--") {
                    expr_list(n, 0, lhs);
                    out += n.text;
                } else {
                    expr_list(n, 0, lhs);
                    out += " " + n.text + " ";
                    expr_list(n, lhs, n.children.size() - lhs);
                }
                break;
            }
            case NodeKind::Declaration:
            case NodeKind::GlobalVarDecl: {
                out += n.detail == "const" ? "const " : "var ";
                auto names = static_cast<std::size_t>(n.aux);
                expr_list(n, 0, names);
                if (!n.resolved_type.empty()) out += " " + n.resolved_type;
                if (n.children.size() > names) {
                    out += " = ";
                    expr_list(n, names, n.children.size() - names);
                }
                break;
            }
            case NodeKind::ExprStmt:
                if (n.children.empty())
                    out += n.text;
                else
                    expr(*n.children[0]);
                break;
            case NodeKind::Empty:
                break;
            default:
                expr(n);
                break;
        }
    }

    void block_body(const AstNode& block) {
        out += "{\n";
        ++indent;
        for (const auto& stmt : block.children) statement(*stmt);
        --indent;
        pad();
        out += "}";
    }

    void statement(const AstNode& n) {
        pad();
        switch (n.kind) {
            case NodeKind::If: {
                if_chain(n);
                out += "\n";
                break;
            }
            case NodeKind::For: {
                out += "for ";
                std::size_t body = n.children.size() - 1;
                if (n.detail == "3") {
                    simple_stmt(*n.children[0]);
                    out += "; ";
                    expr(*n.children[1]);
                    out += "; ";
                    simple_stmt(*n.children[2]);
                    out += " ";
                } else if (n.detail == "c") {
                    expr(*n.children[0]);
                    out += " ";
                } else if (n.detail == "r") {
                    if (n.aux > 0) {
                        expr_list(n, 0, static_cast<std::size_t>(n.aux));
                        out += " " + n.text + " ";
                    }
                    out += "range ";
                    expr(*n.children[body - 1]);
                    out += " ";
                }
                block_body(*n.children[body]);
                out += "\n";
                break;
            }
            case NodeKind::Switch: {
                out += "switch ";
                std::size_t i = 0;
                if (n.detail.find('i') != std::string::npos) {
                    simple_stmt(*n.children[i++]);
                    out += "; ";
                }
                if (n.detail.find('t') != std::string::npos) {
                    expr(*n.children[i++]);
                    out += " ";
                }
                out += "{\n";
                for (; i < n.children.size(); ++i) case_clause(*n.children[i]);
                pad();
                out += "}\n";
                break;
            }
            case NodeKind::Select: {
                out += "select {\n";
                for (const auto& c : n.children) case_clause(*c);
                pad();
                out += "}\n";
                break;
            }
            case NodeKind::Return: {
                out += "return";
                if (!n.children.empty()) {
                    out += " ";
                    args(n, 0);
                }
                out += "\n";
                break;
            }
            case NodeKind::DeferStmt:
                out += "defer ";
                expr(*n.children[0]);
                out += "\n";
                break;
            case NodeKind::GoStmt:
                out += "go ";
                expr(*n.children[0]);
                out += "\n";
                break;
            case NodeKind::Block:
                block_body(n);
                out += "\n";
                break;
            default:
                simple_stmt(n);
                out += "\n";
                break;
        }
    }

    void if_chain(const AstNode& n) {
        out += "if ";
        std::size_t i = 0;
        if (n.detail.find('i') != std::string::npos) {
            simple_stmt(*n.children[i++]);
            out += "; ";
        }
        expr(*n.children[i++]);
        out += " ";
        block_body(*n.children[i++]);
        if (n.detail.find('e') != std::string::npos) {
            out += " else ";
            const AstNode& e = *n.children[i];
            if (e.kind == NodeKind::If)
                if_chain(e);
            else
                block_body(e);
        }
    }

    void case_clause(const AstNode& n) {
        ++indent;
        pad();
        if (n.aux == 0) {
            out += "default:\n";
        } else {
            out += "case ";
            expr_list(n, 0, static_cast<std::size_t>(n.aux));
            out += ":\n";
        }
        ++indent;
        for (std::size_t i = static_cast<std::size_t>(n.aux); i < n.children.size(); ++i)
            statement(*n.children[i]);
        indent -= 2;
    }

    void field_list(const AstNode& fn, const std::string& role, bool parens_always) {
        std::vector<const AstNode*> fields;
        for (const auto& c : fn.children)
            if (c->kind == NodeKind::Field && c->detail == role) fields.push_back(c.get());
        if (role == "result") {
            if (fields.empty()) return;
            out += " ";
            bool wrap = parens_always || fields.size() > 1 || !fields[0]->text.empty();
            if (wrap) out += "(";
            for (std::size_t i = 0; i < fields.size(); ++i) {
                if (i) out += ", ";
                if (!fields[i]->text.empty()) out += fields[i]->text + " ";
                out += fields[i]->resolved_type;
            }
            if (wrap) out += ")";
            return;
        }
        out += "(";
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out += ", ";
            if (!fields[i]->text.empty()) out += fields[i]->text + " ";
            out += fields[i]->resolved_type;
        }
        out += ")";
    }

    void declaration(const AstNode& n) {
        switch (n.kind) {
            case NodeKind::FunctionDecl: {
                out += "func ";
                const AstNode* recv = nullptr;
                for (const auto& c : n.children)
                    if (c->kind == NodeKind::Field && c->detail == "receiver") recv = c.get();
                if (recv) {
                    out += "(";
                    if (!recv->text.empty()) out += recv->text + " ";
                    out += recv->resolved_type + ") ";
                }
                out += n.text;
                field_list(n, "param", false);
                field_list(n, "result", false);
                out += " ";
                block_body(*n.children.back());
                out += "\n";
                break;
            }
            case NodeKind::TypeDecl:
                out += "type " + n.text + " " + n.resolved_type + "\n";
                break;
            case NodeKind::GlobalVarDecl:
                simple_stmt(n);
                out += "\n";
                break;
            case NodeKind::Import:
                out += "import ";
                if (!n.detail.empty()) out += n.detail + " ";
                out += "\"" + n.text + "\"\n";
                break;
            default:
                statement(n);
                break;
        }
    }

    void file(const AstNode& n) {
        out += "package " + n.text + "\n\n";
        for (const auto& c : n.children) declaration(*c);
    }
};

}  // namespace

const char* node_kind_name(NodeKind kind) {
    switch (kind) {
        case NodeKind::File: return "file";
        case NodeKind::FunctionDecl: return "function-decl";
        case NodeKind::TypeDecl: return "type-decl";
        case NodeKind::GlobalVarDecl: return "global-var-decl";
        case NodeKind::Import: return "import";
        case NodeKind::Declaration: return "declaration";
        case NodeKind::ShortVarDecl: return "short-var-decl";
        case NodeKind::Assign: return "assign";
        case NodeKind::If: return "if";
        case NodeKind::For: return "for";
        case NodeKind::Switch: return "switch";
        case NodeKind::CaseClause: return "case";
        case NodeKind::Select: return "select";
        case NodeKind::Return: return "return";
        case NodeKind::DeferStmt: return "defer";
        case NodeKind::GoStmt: return "go";
        case NodeKind::Block: return "block";
        case NodeKind::ExprStmt: return "expr-stmt";
        case NodeKind::Call: return "call";
        case NodeKind::Cast: return "cast";
        case NodeKind::SelectorChain: return "selector-chain";
        case NodeKind::UnaryOp: return "unary-op";
        case NodeKind::BinaryOp: return "binary-op";
        case NodeKind::CompositeLiteral: return "composite-literal";
        case NodeKind::Index: return "index";
        case NodeKind::KeyValue: return "key-value";
        case NodeKind::Identifier: return "identifier";
        case NodeKind::Literal: return "literal";
        case NodeKind::Field: return "field";
        case NodeKind::Empty: return "empty";
    }
    return "unknown";
}

std::string print_expr(const AstNode& node) {
    Printer p;
    p.expr(node);
    return p.out;
}

std::string print_ast(const AstNode& node) {
    Printer p;
    if (node.kind == NodeKind::File)
        p.file(node);
    else if (node.kind == NodeKind::FunctionDecl || node.kind == NodeKind::TypeDecl ||
             node.kind == NodeKind::GlobalVarDecl || node.kind == NodeKind::Import)
        p.declaration(node);
    else
        p.statement(node);
    return p.out;
}

bool ast_equal(const AstNode& a, const AstNode& b) {
    if (a.kind != b.kind || a.text != b.text || a.detail != b.detail || a.aux != b.aux ||
        a.resolved_type != b.resolved_type || a.resolved_package != b.resolved_package)
        return false;
    if (a.children.size() != b.children.size()) return false;
    for (std::size_t i = 0; i < a.children.size(); ++i)
        if (!ast_equal(*a.children[i], *b.children[i])) return false;
    return true;
}

}  // namespace gounsafe
