#include "gounsafe/cfg.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

namespace gounsafe {

namespace {

const std::unordered_set<std::string> kBuiltinFuncs = {
    "append", "cap", "close", "complex", "copy", "delete", "imag", "len",
    "make", "new", "panic", "print", "println", "real", "recover",
};

const std::unordered_set<std::string> kBinaryOps = {
    "||", "&&", "==", "!=", "<", "<=", ">", ">=",
    "+", "-", "*", "/", "%", "&", "|", "^", "<<", ">>", "&^",
};

const std::unordered_set<std::string> kUnaryOps = {"+", "-", "!", "^", "*", "&", "<-"};

const std::unordered_set<std::string> kAssignOps = {
    "=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", "&^=",
};

const std::unordered_set<std::string> kUntypedNames = {"true", "false", "nil", "iota", "_"};

bool span_empty(const Span& s) {
    return s.line == 0 && s.col == 0 && s.end_line == 0 && s.end_col == 0;
}

std::string field_var_name(const AstNode& field, int& unnamed_params, int& unnamed_results) {
    if (!field.text.empty()) return field.text;
    if (field.detail == "receiver") return "receiver";
    if (field.detail == "result") return "result" + std::to_string(unnamed_results++);
    return "param" + std::to_string(unnamed_params++);
}

std::size_t matching_bracket(const std::string& t, std::size_t open, char oc, char cc) {
    int depth = 0;
    for (std::size_t i = open; i < t.size(); ++i) {
        if (t[i] == oc) ++depth;
        if (t[i] == cc && --depth == 0) return i;
    }
    return t.size();
}

void scan_type(const std::string& t, std::set<std::string>& out);

void scan_struct_fields(const std::string& body, std::set<std::string>& out) {
    std::size_t start = 0;
    int depth = 0;
    auto handle = [&](std::string field) {
        while (!field.empty() && field.front() == ' ') field.erase(field.begin());
        while (!field.empty() && field.back() == ' ') field.pop_back();
        if (field.empty()) return;
        // "name type" drops the field name; a single token is an embedded type
        std::size_t sp = field.find(' ');
        bool named = sp != std::string::npos &&
                     (std::isalpha(static_cast<unsigned char>(field[0])) || field[0] == '_') &&
                     field.find_first_of("*[({.<") >= sp;
        scan_type(named ? field.substr(sp + 1) : field, out);
    };
    for (std::size_t i = 0; i < body.size(); ++i) {
        char c = body[i];
        if (c == '{' || c == '(' || c == '[') ++depth;
        if (c == '}' || c == ')' || c == ']') --depth;
        if (c == ';' && depth == 0) {
            handle(body.substr(start, i - start));
            start = i + 1;
        }
    }
    handle(body.substr(start));
}

void scan_type(const std::string& t, std::set<std::string>& out) {
    std::size_t i = 0;
    while (i < t.size()) {
        char c = t[i];
        if (c == '*') {
            out.insert("Pointer");
            ++i;
        } else if (c == '[') {
            std::size_t close = matching_bracket(t, i, '[', ']');
            out.insert(close == i + 1 ? "Slice" : "Array");
            i = close + 1;
        } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < t.size() && (std::isalnum(static_cast<unsigned char>(t[j])) ||
                                    t[j] == '_' || t[j] == '.' || t[j] == '/'))
                ++j;
            std::string word = t.substr(i, j - i);
            i = j;
            if (word == "map") {
                out.insert("Map");
                std::size_t open = t.find('[', i);
                if (open == std::string::npos) continue;
                std::size_t close = matching_bracket(t, open, '[', ']');
                scan_type(t.substr(open + 1, close - open - 1), out);
                i = close + 1;
            } else if (word == "chan") {
                out.insert("Chan");
            } else if (word == "func") {
                out.insert("Func");
            } else if (word == "struct") {
                out.insert("Struct");
                std::size_t open = t.find('{', i);
                if (open == std::string::npos) continue;
                std::size_t close = matching_bracket(t, open, '{', '}');
                scan_struct_fields(t.substr(open + 1, close - open - 1), out);
                i = close + 1;
            } else if (word == "interface") {
                out.insert("Interface");
                std::size_t open = t.find('{', i);
                if (open == std::string::npos) continue;
                i = matching_bracket(t, open, '{', '}') + 1;
            } else {
                out.insert(word);
            }
        } else {
            ++i;
        }
    }
}

struct OpenEnd {
    int v;
    EdgeKind kind;
};

class Builder {
public:
    Builder(const ContextRef& context, const std::vector<UnsafeUsageSite>& sites)
        : context_(context), sites_(sites) {}

    EnrichedCfg build() {
        if (context_.node == nullptr ||
            (context_.node->kind == NodeKind::ExprStmt && context_.node->children.empty()))
            throw UnsupportedContext("context is an opaque leaf");
        collect_declared(*context_.node);
        switch (context_.kind) {
            case ContextKind::FunctionBody:
                cfg_.context_type = CfgContextType::Function;
                build_function(*context_.node);
                break;
            case ContextKind::GlobalVariable:
                cfg_.context_type = CfgContextType::GlobalVariable;
                build_declaration(*context_.node);
                break;
            case ContextKind::TypeDeclaration:
                cfg_.context_type = CfgContextType::TypeDefinition;
                build_declaration(*context_.node);
                break;
        }
        map_usages();
        renumber();
        std::sort(cfg_.edges.begin(), cfg_.edges.end(), [](const Edge& a, const Edge& b) {
            return std::tie(a.src, a.kind, a.dst) < std::tie(b.src, b.kind, b.dst);
        });
        return std::move(cfg_);
    }

private:
    const ContextRef& context_;
    const std::vector<UnsafeUsageSite>& sites_;
    EnrichedCfg cfg_;
    std::map<std::string, int> var_ids_;
    std::set<std::tuple<int, int, int>> edge_set_;
    std::vector<int> stmt_order_;
    std::vector<int> var_order_;
    std::vector<int> result_vars_;
    std::vector<int> pending_exit_;
    std::unordered_set<std::string> declared_;

    void collect_declared(const AstNode& n) {
        if (n.kind == NodeKind::Declaration || n.kind == NodeKind::GlobalVarDecl ||
            n.kind == NodeKind::ShortVarDecl) {
            for (int i = 0; i < n.aux && i < static_cast<int>(n.children.size()); ++i) {
                if (n.children[i]->kind == NodeKind::Identifier)
                    declared_.insert(n.children[i]->text);
            }
        }
        if (n.kind == NodeKind::Field && !n.text.empty()) declared_.insert(n.text);
        if (n.kind == NodeKind::For && n.detail == "r") {
            for (int i = 0; i < n.aux; ++i) {
                if (n.children[i]->kind == NodeKind::Identifier)
                    declared_.insert(n.children[i]->text);
            }
        }
        for (const auto& c : n.children) collect_declared(*c);
    }

    int add_statement(const char* type, Span span, const AstNode* node) {
        int id = static_cast<int>(cfg_.vertices.size());
        Vertex vx;
        vx.id = id;
        vx.kind = VertexKind::Statement;
        vx.span = span;
        vx.add_label({LabelCategory::StatementType, type});
        cfg_.vertices.push_back(std::move(vx));
        cfg_.vertex_nodes.push_back(node);
        cfg_.vertex_exprs.emplace_back();
        stmt_order_.push_back(id);
        return id;
    }

    int var_vertex(const std::string& name) {
        auto it = var_ids_.find(name);
        if (it != var_ids_.end()) return it->second;
        int id = static_cast<int>(cfg_.vertices.size());
        Vertex vx;
        vx.id = id;
        vx.kind = VertexKind::Variable;
        vx.name = name;
        vx.add_label({LabelCategory::VariableName, name});
        cfg_.vertices.push_back(std::move(vx));
        cfg_.vertex_nodes.push_back(nullptr);
        cfg_.vertex_exprs.emplace_back();
        var_order_.push_back(id);
        var_ids_[name] = id;
        return id;
    }

    void add_edge(int src, int dst, EdgeKind kind) {
        auto key = std::make_tuple(src, dst, static_cast<int>(kind));
        if (!edge_set_.insert(key).second) return;
        cfg_.edges.push_back({src, dst, kind});
    }

    void connect(std::vector<OpenEnd>& outs, int target) {
        for (const OpenEnd& o : outs) add_edge(o.v, target, o.kind);
        outs.clear();
    }

    static void append(std::vector<OpenEnd>& outs, std::vector<OpenEnd>&& more) {
        for (OpenEnd& o : more) outs.push_back(o);
        more.clear();
    }

    void attach(int v, const AstNode& e, bool write) {
        cfg_.vertex_exprs[v].push_back(&e);
        analyze_expr(v, e, write);
    }

    // ==== Context roots ====

    void build_function(const AstNode& fn) {
        int entry = add_statement("entry", fn.span, nullptr);
        int unnamed_params = 0, unnamed_results = 0;
        const AstNode* body = nullptr;
        for (const auto& c : fn.children) {
            if (c->kind == NodeKind::Block) {
                body = c.get();
                continue;
            }
            if (c->kind != NodeKind::Field) continue;
            std::string name = field_var_name(*c, unnamed_params, unnamed_results);
            if (name == "_") continue;
            int v = var_vertex(name);
            cfg_.vertices[v].add_label({LabelCategory::VariableType,
                                        c->detail == "receiver" ? "receiver"
                                        : c->detail == "result" ? "result"
                                                                : "param"});
            add_edge(entry, v, EdgeKind::Decl);
            if (c->detail == "result") result_vars_.push_back(v);
        }

        std::vector<OpenEnd> outs{{entry, EdgeKind::Flow}};
        if (body != nullptr) {
            std::vector<OpenEnd> bouts;
            int first = build_list(body->children, 0, body->children.size(), bouts);
            if (first != -1) {
                connect(outs, first);
                outs = std::move(bouts);
            }
        }
        int exit = add_statement("exit", Span{}, nullptr);
        connect(outs, exit);
        for (int r : pending_exit_) add_edge(r, exit, EdgeKind::Flow);
    }

    void build_declaration(const AstNode& d) {
        int dv = add_statement("declaration", d.span, &d);
        if (d.kind != NodeKind::GlobalVarDecl && d.kind != NodeKind::Declaration) return;
        bool has_init = static_cast<int>(d.children.size()) > d.aux;
        for (int i = 0; i < d.aux && i < static_cast<int>(d.children.size()); ++i) {
            if (d.children[i]->kind != NodeKind::Identifier) continue;
            if (d.children[i]->text == "_") continue;
            int v = var_vertex(d.children[i]->text);
            add_edge(dv, v, EdgeKind::Decl);
            if (has_init) add_edge(dv, v, EdgeKind::Assign);
        }
        for (std::size_t i = d.aux; i < d.children.size(); ++i) attach(dv, *d.children[i], false);
    }

    // ==== Control flow ====

    int build_list(const std::vector<std::unique_ptr<AstNode>>& stmts, std::size_t begin,
                   std::size_t end, std::vector<OpenEnd>& outs) {
        int first = -1;
        std::vector<OpenEnd> cur;
        for (std::size_t i = begin; i < end; ++i) {
            const AstNode& s = *stmts[i];
            if (s.kind == NodeKind::Empty) continue;
            std::vector<OpenEnd> souts;
            int head = build_stmt(s, souts);
            if (first == -1)
                first = head;
            else
                connect(cur, head);
            cur = std::move(souts);
        }
        outs = std::move(cur);
        return first;
    }

    int build_stmt(const AstNode& s, std::vector<OpenEnd>& souts) {
        switch (s.kind) {
            case NodeKind::Declaration: {
                int v = add_statement("declare", s.span, &s);
                bool has_init = static_cast<int>(s.children.size()) > s.aux;
                for (int i = 0; i < s.aux; ++i) {
                    if (s.children[i]->kind != NodeKind::Identifier) continue;
                    if (s.children[i]->text == "_") continue;
                    int nv = var_vertex(s.children[i]->text);
                    add_edge(v, nv, EdgeKind::Decl);
                    if (has_init) add_edge(v, nv, EdgeKind::Assign);
                }
                for (std::size_t i = s.aux; i < s.children.size(); ++i)
                    attach(v, *s.children[i], false);
                souts = {{v, EdgeKind::Flow}};
                return v;
            }
            case NodeKind::ShortVarDecl: {
                int v = add_statement("short-decl", s.span, &s);
                for (int i = 0; i < s.aux; ++i) {
                    if (s.children[i]->text == "_") continue;
                    int nv = var_vertex(s.children[i]->text);
                    add_edge(v, nv, EdgeKind::Decl);
                    add_edge(v, nv, EdgeKind::Assign);
                }
                for (std::size_t i = s.aux; i < s.children.size(); ++i)
                    attach(v, *s.children[i], false);
                souts = {{v, EdgeKind::Flow}};
                return v;
            }
            case NodeKind::Assign: {
                bool incdec = s.text == "++" || s.text == "--";
                int v = add_statement(incdec ? "inc-dec" : "assign", s.span, &s);
                for (int i = 0; i < s.aux; ++i) {
                    attach(v, *s.children[i], true);
                    if (s.text != "=") analyze_expr(v, *s.children[i], false);
                }
                for (std::size_t i = s.aux; i < s.children.size(); ++i)
                    attach(v, *s.children[i], false);
                souts = {{v, EdgeKind::Flow}};
                return v;
            }
            case NodeKind::ExprStmt: {
                int v = add_statement("expr", s.span, &s);
                for (const auto& c : s.children) attach(v, *c, false);
                souts = {{v, EdgeKind::Flow}};
                return v;
            }
            case NodeKind::Return: {
                int v = add_statement("return", s.span, &s);
                for (const auto& c : s.children) attach(v, *c, false);
                for (int r : result_vars_) add_edge(v, r, EdgeKind::Assign);
                pending_exit_.push_back(v);
                souts.clear();
                return v;
            }
            case NodeKind::DeferStmt:
            case NodeKind::GoStmt: {
                int v = add_statement(s.kind == NodeKind::DeferStmt ? "defer" : "go", s.span, &s);
                for (const auto& c : s.children) attach(v, *c, false);
                souts = {{v, EdgeKind::Flow}};
                return v;
            }
            case NodeKind::Block: {
                int v = add_statement("block", s.span, &s);
                std::vector<OpenEnd> bouts;
                int first = build_list(s.children, 0, s.children.size(), bouts);
                if (first != -1) {
                    add_edge(v, first, EdgeKind::Flow);
                    souts = std::move(bouts);
                } else {
                    souts = {{v, EdgeKind::Flow}};
                }
                return v;
            }
            case NodeKind::If:
                return build_if(s, souts);
            case NodeKind::For:
                return build_for(s, souts);
            case NodeKind::Switch:
                return build_switch(s, souts);
            case NodeKind::Select:
                return build_select(s, souts);
            default: {
                int v = add_statement("expr", s.span, &s);
                souts = {{v, EdgeKind::Flow}};
                return v;
            }
        }
    }

    int build_if(const AstNode& s, std::vector<OpenEnd>& souts) {
        int head = -1;
        std::size_t idx = 0;
        std::vector<OpenEnd> pre;
        if (s.detail.find('i') != std::string::npos) {
            head = build_stmt(*s.children[0], pre);
            idx = 1;
        }
        int ifv = add_statement("if", s.span, &s);
        if (head == -1)
            head = ifv;
        else
            connect(pre, ifv);
        attach(ifv, *s.children[idx], false);
        const AstNode& then_block = *s.children[idx + 1];

        std::vector<OpenEnd> touts;
        int tfirst = build_list(then_block.children, 0, then_block.children.size(), touts);
        if (tfirst != -1) {
            add_edge(ifv, tfirst, EdgeKind::Flow);
            append(souts, std::move(touts));
        } else {
            souts.push_back({ifv, EdgeKind::Flow});
        }

        if (s.detail.find('e') != std::string::npos) {
            const AstNode& els = *s.children.back();
            if (els.kind == NodeKind::Block) {
                std::vector<OpenEnd> eouts;
                int efirst = build_list(els.children, 0, els.children.size(), eouts);
                if (efirst != -1) {
                    add_edge(ifv, efirst, EdgeKind::AltFlow);
                    append(souts, std::move(eouts));
                } else {
                    souts.push_back({ifv, EdgeKind::AltFlow});
                }
            } else {
                std::vector<OpenEnd> eouts;
                int efirst = build_stmt(els, eouts);
                add_edge(ifv, efirst, EdgeKind::AltFlow);
                append(souts, std::move(eouts));
            }
        } else {
            souts.push_back({ifv, EdgeKind::AltFlow});
        }
        return head;
    }

    int build_for(const AstNode& s, std::vector<OpenEnd>& souts) {
        const AstNode& body = *s.children.back();
        if (s.detail == "r") {
            int rv = add_statement("range", s.span, &s);
            for (int i = 0; i < s.aux; ++i) {
                const AstNode& var = *s.children[i];
                if (var.kind == NodeKind::Identifier) {
                    if (var.text == "_") continue;
                    int nv = var_vertex(var.text);
                    if (s.text == ":=") add_edge(rv, nv, EdgeKind::Decl);
                    add_edge(rv, nv, EdgeKind::Assign);
                } else {
                    attach(rv, var, true);
                }
            }
            attach(rv, *s.children[s.aux], false);
            loop_body(rv, body, -1);
            souts = {{rv, EdgeKind::AltFlow}};
            return rv;
        }
        if (s.detail == "3") {
            const AstNode& init = *s.children[0];
            const AstNode& cond = *s.children[1];
            const AstNode& post = *s.children[2];
            int head = -1;
            std::vector<OpenEnd> pre;
            if (init.kind != NodeKind::Empty) head = build_stmt(init, pre);
            bool has_cond = cond.kind != NodeKind::Empty;
            int forv = add_statement("for", has_cond ? cond.span : s.span, &s);
            if (head == -1)
                head = forv;
            else
                connect(pre, forv);
            if (has_cond) attach(forv, cond, false);
            int postv = -1;
            if (post.kind != NodeKind::Empty) {
                std::vector<OpenEnd> po;
                postv = build_stmt(post, po);
                connect(po, forv);
            }
            loop_body(forv, body, postv);
            if (has_cond) souts = {{forv, EdgeKind::AltFlow}};
            return head;
        }
        int forv = add_statement("for", s.span, &s);
        if (s.detail == "c") attach(forv, *s.children[0], false);
        loop_body(forv, body, -1);
        if (s.detail == "c") souts = {{forv, EdgeKind::AltFlow}};
        return forv;
    }

    // Wires head -> body -> (post ->) head; empty bodies loop straight back.
    void loop_body(int headv, const AstNode& body, int postv) {
        int back = postv != -1 ? postv : headv;
        std::vector<OpenEnd> bouts;
        int bfirst = build_list(body.children, 0, body.children.size(), bouts);
        if (bfirst != -1) {
            add_edge(headv, bfirst, EdgeKind::Flow);
            connect(bouts, back);
        } else {
            add_edge(headv, back, EdgeKind::Flow);
        }
    }

    int build_switch(const AstNode& s, std::vector<OpenEnd>& souts) {
        int head = -1;
        std::size_t idx = 0;
        std::vector<OpenEnd> pre;
        if (s.detail.find('i') != std::string::npos) {
            head = build_stmt(*s.children[0], pre);
            idx = 1;
        }
        int swv = add_statement("switch", s.span, &s);
        if (head == -1)
            head = swv;
        else
            connect(pre, swv);
        if (s.detail.find('t') != std::string::npos) {
            attach(swv, *s.children[idx], false);
            ++idx;
        }
        for (std::size_t i = idx; i < s.children.size(); ++i) {
            const AstNode& clause = *s.children[i];
            if (clause.kind != NodeKind::CaseClause) continue;
            int cv = add_statement("case", clause.span, &clause);
            add_edge(swv, cv, EdgeKind::Flow);
            for (int e = 0; e < clause.aux; ++e) attach(cv, *clause.children[e], false);
            std::vector<OpenEnd> cur{{cv, EdgeKind::Flow}};
            std::vector<OpenEnd> couts;
            int cfirst = build_list(clause.children, clause.aux, clause.children.size(), couts);
            if (cfirst != -1) {
                connect(cur, cfirst);
                cur = std::move(couts);
            }
            append(souts, std::move(cur));
        }
        souts.push_back({swv, EdgeKind::AltFlow});
        return head;
    }

    int build_select(const AstNode& s, std::vector<OpenEnd>& souts) {
        int selv = add_statement("select", s.span, &s);
        for (const auto& child : s.children) {
            const AstNode& clause = *child;
            if (clause.kind != NodeKind::CaseClause) continue;
            int cv = add_statement("case", clause.span, &clause);
            add_edge(selv, cv, EdgeKind::Flow);
            std::vector<OpenEnd> cur{{cv, EdgeKind::Flow}};
            std::size_t b = 0;
            if (clause.aux == 1 && !clause.children.empty()) {
                std::vector<OpenEnd> co;
                int comm = build_stmt(*clause.children[0], co);
                connect(cur, comm);
                cur = std::move(co);
                b = 1;
            }
            std::vector<OpenEnd> couts;
            int cfirst = build_list(clause.children, b, clause.children.size(), couts);
            if (cfirst != -1) {
                connect(cur, cfirst);
                cur = std::move(couts);
            }
            append(souts, std::move(cur));
        }
        souts.push_back({selv, EdgeKind::AltFlow});
        return selv;
    }

    // ==== Memory-access edges ====

    void analyze_expr(int v, const AstNode& e, bool write) {
        switch (e.kind) {
            case NodeKind::Identifier: {
                if (kUntypedNames.count(e.text)) return;
                emit_chain(v, {e.text}, write, false);
                return;
            }
            case NodeKind::SelectorChain:
            case NodeKind::Index: {
                bool indirect = false;
                auto comps = chain_of(v, e, &indirect);
                if (!comps.empty()) {
                    emit_chain(v, comps, write, indirect);
                    return;
                }
                for (const auto& c : e.children) analyze_expr(v, *c, false);
                return;
            }
            case NodeKind::UnaryOp: {
                if (e.text == "*") {
                    bool indirect = false;
                    auto comps = chain_of(v, e, &indirect);
                    if (!comps.empty()) {
                        emit_chain(v, comps, write, indirect);
                        return;
                    }
                }
                for (const auto& c : e.children) analyze_expr(v, *c, false);
                return;
            }
            case NodeKind::BinaryOp: {
                for (const auto& c : e.children) analyze_expr(v, *c, false);
                return;
            }
            case NodeKind::Call: {
                const AstNode& callee = *e.children[0];
                std::size_t arg_begin = 1;
                if (callee.kind == NodeKind::Identifier) {
                    if (declared_.count(callee.text)) {
                        add_edge(v, var_vertex(callee.text), EdgeKind::Call);
                    } else if ((callee.text == "make" || callee.text == "new") &&
                               kBuiltinFuncs.count(callee.text)) {
                        arg_begin = 2;  // skip the type argument
                    }
                } else if (callee.kind == NodeKind::SelectorChain) {
                    if (callee.resolved_package.empty())
                        analyze_expr(v, *callee.children[0], false);
                } else {
                    analyze_expr(v, callee, false);
                }
                for (std::size_t i = arg_begin; i < e.children.size(); ++i)
                    analyze_expr(v, *e.children[i], false);
                return;
            }
            case NodeKind::Cast: {
                for (const auto& c : e.children) analyze_expr(v, *c, false);
                return;
            }
            case NodeKind::CompositeLiteral: {
                for (const auto& c : e.children) {
                    if (c->kind == NodeKind::KeyValue) {
                        if (c->children.size() > 1) analyze_expr(v, *c->children[1], false);
                    } else {
                        analyze_expr(v, *c, false);
                    }
                }
                return;
            }
            case NodeKind::Literal:
                return;
            default: {
                for (const auto& c : e.children) analyze_expr(v, *c, false);
                return;
            }
        }
    }

    // Flattens selector/index/deref chains into variable components; empty
    // when the base is not a plain variable path. Index expressions inside
    // the chain are analyzed as reads on the way.
    std::vector<std::string> chain_of(int v, const AstNode& e, bool* indirect) {
        switch (e.kind) {
            case NodeKind::Identifier:
                if (kUntypedNames.count(e.text)) return {};
                return {e.text};
            case NodeKind::SelectorChain: {
                if (!e.resolved_package.empty()) return {e.text};
                auto base = chain_of(v, *e.children[0], indirect);
                if (base.empty()) return {};
                base.push_back(e.text);
                return base;
            }
            case NodeKind::Index: {
                auto base = chain_of(v, *e.children[0], indirect);
                for (std::size_t i = 1; i < e.children.size(); ++i)
                    analyze_expr(v, *e.children[i], false);
                return base;
            }
            case NodeKind::UnaryOp:
                if (e.text == "*") {
                    *indirect = true;
                    return chain_of(v, *e.children[0], indirect);
                }
                return {};
            default:
                return {};
        }
    }

    void emit_chain(int v, const std::vector<std::string>& comps, bool write, bool indirect) {
        std::vector<int> ids;
        ids.reserve(comps.size());
        for (const auto& name : comps) ids.push_back(var_vertex(name));
        for (std::size_t i = 0; i + 1 < ids.size(); ++i)
            add_edge(ids[i], ids[i + 1], EdgeKind::Contains);
        for (std::size_t i = 0; i + 1 < ids.size(); ++i)
            add_edge(v, ids[i], write ? EdgeKind::Update : EdgeKind::Use);
        EdgeKind last = write ? (indirect ? EdgeKind::Update : EdgeKind::Assign)
                              : (indirect ? EdgeKind::Use : EdgeKind::DirUse);
        add_edge(v, ids.back(), last);
    }

    // ==== Finalization ====

    void map_usages() {
        for (const UnsafeUsageSite& site : sites_) {
            int best = -1;
            long best_size = 0;
            for (int id : stmt_order_) {
                const Vertex& vx = cfg_.vertices[id];
                if (span_empty(vx.span)) continue;
                if (!vx.span.contains(site.span.line, site.span.col)) continue;
                long size = static_cast<long>(vx.span.end_line - vx.span.line) * 1000000L +
                            (vx.span.end_col - vx.span.col);
                if (best == -1 || size < best_size) {
                    best = id;
                    best_size = size;
                }
            }
            if (best == -1) best = stmt_order_.front();
            cfg_.usage_vertices.emplace_back(site, best);
        }
    }

    void renumber() {
        std::vector<int> order = stmt_order_;
        order.insert(order.end(), var_order_.begin(), var_order_.end());
        std::vector<int> remap(cfg_.vertices.size());
        for (std::size_t pos = 0; pos < order.size(); ++pos) remap[order[pos]] = static_cast<int>(pos);

        std::vector<Vertex> vertices(cfg_.vertices.size());
        std::vector<const AstNode*> nodes(cfg_.vertices.size());
        std::vector<std::vector<const AstNode*>> exprs(cfg_.vertices.size());
        for (std::size_t old = 0; old < cfg_.vertices.size(); ++old) {
            int fresh = remap[old];
            vertices[fresh] = std::move(cfg_.vertices[old]);
            vertices[fresh].id = fresh;
            nodes[fresh] = cfg_.vertex_nodes[old];
            exprs[fresh] = std::move(cfg_.vertex_exprs[old]);
        }
        cfg_.vertices = std::move(vertices);
        cfg_.vertex_nodes = std::move(nodes);
        cfg_.vertex_exprs = std::move(exprs);
        for (Edge& e : cfg_.edges) {
            e.src = remap[e.src];
            e.dst = remap[e.dst];
        }
        for (auto& [site, id] : cfg_.usage_vertices) id = remap[id];
    }
};

class Labeler {
public:
    Labeler(EnrichedCfg& cfg, const ContextRef& context, const AstNode& root,
            const SourceUnit& unit)
        : cfg_(cfg), context_(context), root_(root), unit_(unit) {}

    void run() {
        for (const auto& c : root_.children) {
            if (c->kind == NodeKind::FunctionDecl) pkg_funcs_.insert(c->text);
            if (c->kind == NodeKind::TypeDecl) pkg_types_.insert(c->text);
        }
        if (context_.kind == ContextKind::FunctionBody) enclosing_fn_ = context_.node->text;
        collect_env(*context_.node);
        for (std::size_t i = 0; i < cfg_.vertices.size(); ++i) {
            if (cfg_.vertices[i].kind == VertexKind::Variable)
                var_ids_[cfg_.vertices[i].name] = static_cast<int>(i);
        }

        for (std::size_t v = 0; v < cfg_.vertices.size(); ++v) {
            if (cfg_.vertices[v].kind != VertexKind::Statement) continue;
            label_statement(static_cast<int>(v));
        }
        label_variables();
        label_context();
    }

private:
    EnrichedCfg& cfg_;
    const ContextRef& context_;
    const AstNode& root_;
    const SourceUnit& unit_;
    std::unordered_set<std::string> pkg_funcs_;
    std::unordered_set<std::string> pkg_types_;
    std::string enclosing_fn_;
    std::map<std::string, std::string> env_;
    std::map<std::string, int> var_ids_;
    std::set<std::string> external_vars_;

    bool same_module(const std::string& import_path) const {
        const std::string& m = unit_.module_path;
        if (m.empty()) return false;
        return import_path == m ||
               (import_path.size() > m.size() && import_path.compare(0, m.size(), m) == 0 &&
                import_path[m.size()] == '/');
    }

    void collect_env(const AstNode& n) {
        if (n.kind == NodeKind::FunctionDecl) {
            int unnamed_params = 0, unnamed_results = 0;
            for (const auto& c : n.children) {
                if (c->kind != NodeKind::Field) continue;
                std::string name = field_var_name(*c, unnamed_params, unnamed_results);
                env_.try_emplace(name, c->resolved_type);
            }
        }
        if (n.kind == NodeKind::Declaration || n.kind == NodeKind::GlobalVarDecl ||
            n.kind == NodeKind::ShortVarDecl) {
            for (int i = 0; i < n.aux && i < static_cast<int>(n.children.size()); ++i) {
                if (n.children[i]->kind == NodeKind::Identifier)
                    env_.try_emplace(n.children[i]->text, n.resolved_type);
            }
        }
        if (n.kind == NodeKind::For && n.detail == "r") {
            for (int i = 0; i < n.aux; ++i) {
                if (n.children[i]->kind == NodeKind::Identifier)
                    env_.try_emplace(n.children[i]->text, "");
            }
        }
        for (const auto& c : n.children) collect_env(*c);
    }

    void add_datatypes(Vertex& vx, const std::string& type) {
        for (Label& l : decompose_type(type)) vx.add_label(std::move(l));
    }

    void label_statement(int v) {
        Vertex& vx = cfg_.vertices[v];
        const AstNode* node = cfg_.vertex_nodes[v];
        if (node != nullptr) {
            if (node->kind == NodeKind::Assign) {
                if (node->text == "++" || node->text == "--")
                    vx.add_label({LabelCategory::Operator, "incdec/" + node->text});
                else if (kAssignOps.count(node->text))
                    vx.add_label({LabelCategory::Operator, "assign/" + node->text});
            }
            bool initialized_decl = (node->kind == NodeKind::Declaration ||
                                     node->kind == NodeKind::GlobalVarDecl) &&
                                    static_cast<int>(node->children.size()) > node->aux;
            if (initialized_decl) vx.add_label({LabelCategory::Operator, "assign/="});
            if (node->kind == NodeKind::For && node->detail == "r" && node->text == "=")
                vx.add_label({LabelCategory::Operator, "assign/="});
        }
        for (const AstNode* e : cfg_.vertex_exprs[v]) label_expr(v, *e);
    }

    void label_expr(int v, const AstNode& e) {
        Vertex& vx = cfg_.vertices[v];
        switch (e.kind) {
            case NodeKind::BinaryOp:
                if (kBinaryOps.count(e.text))
                    vx.add_label({LabelCategory::Operator, "binary/" + e.text});
                break;
            case NodeKind::UnaryOp:
                if (kUnaryOps.count(e.text))
                    vx.add_label({LabelCategory::Operator, "unary/" + e.text});
                break;
            case NodeKind::Call:
                label_call(v, e);
                return;
            case NodeKind::Cast:
                add_datatypes(vx, e.resolved_type);
                break;
            case NodeKind::CompositeLiteral: {
                add_datatypes(vx, e.resolved_type);
                for (const auto& c : e.children) {
                    if (c->kind == NodeKind::KeyValue) {
                        if (c->children.size() > 1) label_expr(v, *c->children[1]);
                    } else {
                        label_expr(v, *c);
                    }
                }
                return;
            }
            case NodeKind::Literal:
                if (e.detail == "type") add_datatypes(vx, e.resolved_type);
                return;
            case NodeKind::SelectorChain:
                if (!e.resolved_package.empty()) {
                    mark_external(e.text, e.resolved_package);
                    return;
                }
                break;
            default:
                break;
        }
        for (const auto& c : e.children) label_expr(v, *c);
    }

    void label_call(int v, const AstNode& call) {
        Vertex& vx = cfg_.vertices[v];
        const AstNode& callee = *call.children[0];
        std::size_t arg_begin = 1;
        if (callee.kind == NodeKind::Identifier) {
            const std::string& name = callee.text;
            if (env_.count(name)) {
                // function-pointer call through a local; the call edge
                // already points at the variable vertex
            } else if (kBuiltinFuncs.count(name)) {
                vx.add_label({LabelCategory::Builtin, name});
                if ((name == "make" || name == "new") && call.children.size() > 1) {
                    const AstNode& t = *call.children[1];
                    std::string ty;
                    if (t.kind == NodeKind::Literal && t.detail == "type")
                        ty = t.resolved_type;
                    else if (t.kind == NodeKind::Identifier || t.kind == NodeKind::SelectorChain)
                        ty = print_expr(t);
                    if (!ty.empty()) {
                        add_datatypes(vx, ty);
                        arg_begin = 2;
                    }
                }
            } else {
                vx.add_label({LabelCategory::Function, name});
                if (pkg_funcs_.count(name)) {
                    vx.add_label({LabelCategory::SelfRef, "package"});
                    vx.add_label({LabelCategory::SelfRef, "module"});
                    if (name == enclosing_fn_)
                        vx.add_label({LabelCategory::SelfRef, "function"});
                }
            }
        } else if (callee.kind == NodeKind::SelectorChain) {
            if (!callee.resolved_package.empty()) {
                vx.add_label(
                    {LabelCategory::Function, callee.resolved_package + "." + callee.text});
                vx.add_label({LabelCategory::Package, callee.resolved_package});
                if (same_module(callee.resolved_package))
                    vx.add_label({LabelCategory::SelfRef, "module"});
            } else {
                vx.add_label({LabelCategory::Function, callee.text});
                const AstNode& recv = *callee.children[0];
                if (recv.kind == NodeKind::Identifier) {
                    auto it = env_.find(recv.text);
                    if (it != env_.end()) {
                        std::string t = it->second;
                        while (!t.empty() && t.front() == '*') t.erase(t.begin());
                        if (pkg_types_.count(t)) {
                            vx.add_label({LabelCategory::SelfRef, "package"});
                            vx.add_label({LabelCategory::SelfRef, "module"});
                        }
                    }
                }
                label_expr(v, *callee.children[0]);
            }
        } else {
            label_expr(v, callee);
        }
        for (std::size_t i = arg_begin; i < call.children.size(); ++i)
            label_expr(v, *call.children[i]);
    }

    void mark_external(const std::string& name, const std::string& package) {
        auto it = var_ids_.find(name);
        if (it == var_ids_.end() || env_.count(name)) return;
        external_vars_.insert(name);
        Vertex& vx = cfg_.vertices[it->second];
        vx.add_label({LabelCategory::Package, package});
        if (same_module(package)) vx.add_label({LabelCategory::SelfRef, "module"});
    }

    void label_variables() {
        for (Vertex& vx : cfg_.vertices) {
            if (vx.kind != VertexKind::Variable) continue;
            auto it = env_.find(vx.name);
            if (it != env_.end() && !it->second.empty()) add_datatypes(vx, it->second);
            if (!external_vars_.count(vx.name)) {
                vx.add_label({LabelCategory::SelfRef, "module"});
                vx.add_label({LabelCategory::SelfRef, "package"});
            }
        }
    }

    void label_context() {
        const AstNode& node = *context_.node;
        if (context_.kind == ContextKind::TypeDeclaration) {
            Vertex& vx = cfg_.vertices[0];
            add_datatypes(vx, node.resolved_type);
            if (vx.has_label({LabelCategory::Datatype, node.text}))
                vx.add_label({LabelCategory::SelfRef, "type"});
        }
        if (context_.kind == ContextKind::GlobalVariable) {
            for (int i = 0; i < node.aux && i < static_cast<int>(node.children.size()); ++i) {
                auto it = var_ids_.find(node.children[i]->text);
                if (it != var_ids_.end())
                    cfg_.vertices[it->second].add_label({LabelCategory::SelfRef, "variable"});
            }
        }
    }
};

}  // namespace

const char* edge_kind_name(EdgeKind k) {
    switch (k) {
        case EdgeKind::Flow: return "flow";
        case EdgeKind::AltFlow: return "alt-flow";
        case EdgeKind::Decl: return "decl";
        case EdgeKind::Use: return "use";
        case EdgeKind::DirUse: return "dir-use";
        case EdgeKind::Update: return "update";
        case EdgeKind::Assign: return "assign";
        case EdgeKind::Call: return "call";
        case EdgeKind::Contains: return "contains";
    }
    return "?";
}

EdgeKind edge_kind_from_name(const std::string& name) {
    for (int i = 0; i < kEdgeKindCount; ++i) {
        EdgeKind k = static_cast<EdgeKind>(i);
        if (name == edge_kind_name(k)) return k;
    }
    throw std::invalid_argument("unknown edge kind: " + name);
}

const char* label_category_name(LabelCategory c) {
    switch (c) {
        case LabelCategory::StatementType: return "stmt-type";
        case LabelCategory::Operator: return "operator";
        case LabelCategory::VariableType: return "var-type";
        case LabelCategory::SelfRef: return "selfref";
        case LabelCategory::Builtin: return "builtin";
        case LabelCategory::Datatype: return "datatype";
        case LabelCategory::Function: return "function";
        case LabelCategory::Package: return "package";
        case LabelCategory::VariableName: return "var-name";
    }
    return "?";
}

std::string label_to_string(const Label& label) {
    return std::string(label_category_name(label.category)) + "/" + label.text;
}

void Vertex::add_label(Label label) {
    auto it = std::lower_bound(labels.begin(), labels.end(), label);
    if (it == labels.end() || !(*it == label)) labels.insert(it, std::move(label));
}

bool Vertex::has_label(const Label& label) const {
    return std::binary_search(labels.begin(), labels.end(), label);
}

const std::string* Vertex::label_text(LabelCategory c) const {
    for (const Label& l : labels) {
        if (l.category == c) return &l.text;
    }
    return nullptr;
}

const char* cfg_context_type_name(CfgContextType t) {
    switch (t) {
        case CfgContextType::Function: return "function";
        case CfgContextType::GlobalVariable: return "global-variable";
        case CfgContextType::TypeDefinition: return "type-definition";
    }
    return "?";
}

std::vector<Label> decompose_type(const std::string& type) {
    if (type.empty()) return {};
    std::set<std::string> texts;
    texts.insert(type);
    scan_type(type, texts);
    std::vector<Label> out;
    out.reserve(texts.size());
    for (const std::string& t : texts) out.push_back({LabelCategory::Datatype, t});
    return out;
}

EnrichedCfg build_cfg(const ContextRef& context, const std::vector<UnsafeUsageSite>& sites) {
    return Builder(context, sites).build();
}

EnrichedCfg label_vertices(EnrichedCfg cfg, const ContextRef& context, const AstNode& root,
                           const SourceUnit& unit) {
    Labeler(cfg, context, root, unit).run();
    return cfg;
}

std::vector<std::string> validate_cfg(const EnrichedCfg& cfg) {
    std::vector<std::string> out;
    int n = static_cast<int>(cfg.vertices.size());
    for (int i = 0; i < n; ++i) {
        const Vertex& vx = cfg.vertices[i];
        if (vx.id != i) out.push_back(fmt::format("vertex {} has id {}", i, vx.id));
        int key_labels = 0;
        LabelCategory key = vx.kind == VertexKind::Statement ? LabelCategory::StatementType
                                                             : LabelCategory::VariableName;
        for (const Label& l : vx.labels) {
            if (l.category == key) ++key_labels;
        }
        if (key_labels != 1)
            out.push_back(fmt::format("vertex {} carries {} {} labels", i, key_labels,
                                      label_category_name(key)));
    }

    auto is_stmt = [&](int id) {
        return id >= 0 && id < n && cfg.vertices[id].kind == VertexKind::Statement;
    };
    auto is_var = [&](int id) {
        return id >= 0 && id < n && cfg.vertices[id].kind == VertexKind::Variable;
    };
    for (const Edge& e : cfg.edges) {
        if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n) {
            out.push_back(fmt::format("edge {}->{} out of range", e.src, e.dst));
            continue;
        }
        bool ok = true;
        switch (e.kind) {
            case EdgeKind::Flow:
            case EdgeKind::AltFlow:
                ok = is_stmt(e.src) && is_stmt(e.dst);
                break;
            case EdgeKind::Contains:
                ok = is_var(e.src) && is_var(e.dst);
                break;
            default:
                ok = is_stmt(e.src) && is_var(e.dst);
                break;
        }
        if (!ok)
            out.push_back(fmt::format("edge {}->{} kind {} connects wrong vertex kinds", e.src,
                                      e.dst, edge_kind_name(e.kind)));
    }

    int entries = 0, exits = 0, declarations = 0;
    int entry_id = -1, exit_id = -1;
    for (const Vertex& vx : cfg.vertices) {
        if (vx.kind != VertexKind::Statement) continue;
        const std::string* st = vx.label_text(LabelCategory::StatementType);
        if (st == nullptr) continue;
        if (*st == "entry") {
            ++entries;
            entry_id = vx.id;
        }
        if (*st == "exit") {
            ++exits;
            exit_id = vx.id;
        }
        if (*st == "declaration") ++declarations;
    }
    if (cfg.context_type == CfgContextType::Function) {
        if (entries != 1) out.push_back(fmt::format("function cfg has {} entry vertices", entries));
        if (exits != 1) out.push_back(fmt::format("function cfg has {} exit vertices", exits));
        std::vector<bool> has_out(n, false);
        for (const Edge& e : cfg.edges) {
            if (e.kind == EdgeKind::Flow || e.kind == EdgeKind::AltFlow) {
                has_out[e.src] = true;
                if (e.dst == entry_id)
                    out.push_back(fmt::format("entry vertex has incoming {} edge from {}",
                                              edge_kind_name(e.kind), e.src));
            }
        }
        for (const Vertex& vx : cfg.vertices) {
            if (vx.kind != VertexKind::Statement || vx.id == exit_id) continue;
            if (!has_out[vx.id])
                out.push_back(fmt::format("statement vertex {} has no outgoing flow", vx.id));
        }
    } else {
        if (declarations != 1)
            out.push_back(fmt::format("{} cfg has {} declaration vertices",
                                      cfg_context_type_name(cfg.context_type), declarations));
        if (entries + exits != 0)
            out.push_back("non-function cfg contains entry/exit vertices");
    }

    for (const auto& [site, id] : cfg.usage_vertices) {
        if (!is_stmt(id))
            out.push_back(fmt::format("usage at {}:{} maps to non-statement vertex {}",
                                      site.span.line, site.span.col, id));
    }
    return out;
}

std::string dump_cfg(const EnrichedCfg& cfg) {
    std::string out = fmt::format("context\t{}\n", cfg_context_type_name(cfg.context_type));
    for (const Vertex& vx : cfg.vertices) {
        std::string span = span_empty(vx.span) ? "-"
                                               : fmt::format("{}:{}-{}:{}", vx.span.line,
                                                             vx.span.col, vx.span.end_line,
                                                             vx.span.end_col);
        out += fmt::format("vertex\t{}\t{}\t{}", vx.id,
                           vx.kind == VertexKind::Statement ? "statement" : "variable", span);
        for (const Label& l : vx.labels) out += "\t" + label_to_string(l);
        out += "\n";
    }
    for (const Edge& e : cfg.edges)
        out += fmt::format("edge\t{}\t{}\t{}\n", e.src, e.dst, edge_kind_name(e.kind));
    for (const auto& [site, id] : cfg.usage_vertices)
        out += fmt::format("usage\t{}:{}\t{}\t{}\n", site.span.line, site.span.col,
                           api_member_name(site.api_member), id);
    return out;
}

}  // namespace gounsafe
