#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "gounsafe/cfg.hpp"
#include "gounsafe/parser.hpp"
#include "gounsafe/usages.hpp"

using namespace gounsafe;

namespace {

// Parses one file, finds its usages, and keeps everything alive for the
// graphs that point back into the tree.
struct Fixture {
    SourceUnit unit;
    std::unique_ptr<AstNode> root;
    std::vector<UnsafeUsageSite> sites;

    explicit Fixture(std::string text, std::string module = "example.com/m")
        : unit{"test.go", std::move(text), "", std::move(module)} {
        root = parse_source(unit);
        sites = find_unsafe_usages(*root, unit);
    }

    ContextRef fn_context(const std::string& name) const {
        for (const auto& c : root->children) {
            if (c->kind == NodeKind::FunctionDecl && c->text == name)
                return ContextRef{ContextKind::FunctionBody, c.get()};
        }
        REQUIRE(false);
        return {};
    }

    ContextRef decl_context(NodeKind kind) const {
        for (const auto& c : root->children) {
            if (c->kind == kind)
                return ContextRef{kind == NodeKind::TypeDecl ? ContextKind::TypeDeclaration
                                                             : ContextKind::GlobalVariable,
                                  c.get()};
        }
        REQUIRE(false);
        return {};
    }

    EnrichedCfg build(const ContextRef& ctx) const {
        std::vector<UnsafeUsageSite> in_ctx;
        for (const auto& s : sites) {
            if (s.context.node == ctx.node) in_ctx.push_back(s);
        }
        return label_vertices(build_cfg(ctx, in_ctx), ctx, *root, unit);
    }

    EnrichedCfg build_fn(const std::string& name) const { return build(fn_context(name)); }
};

std::vector<std::string> stmt_types(const EnrichedCfg& g) {
    std::vector<std::string> out;
    for (const auto& vx : g.vertices) {
        if (vx.kind != VertexKind::Statement) break;
        const std::string* t = vx.label_text(LabelCategory::StatementType);
        REQUIRE(t != nullptr);
        out.push_back(*t);
    }
    return out;
}

int var_id(const EnrichedCfg& g, const std::string& name) {
    for (const auto& vx : g.vertices) {
        if (vx.kind == VertexKind::Variable && vx.name == name) return vx.id;
    }
    return -1;
}

int stmt_id(const EnrichedCfg& g, const std::string& type, int nth = 0) {
    for (const auto& vx : g.vertices) {
        if (vx.kind != VertexKind::Statement) continue;
        const std::string* t = vx.label_text(LabelCategory::StatementType);
        if (t != nullptr && *t == type && nth-- == 0) return vx.id;
    }
    return -1;
}

bool has_edge(const EnrichedCfg& g, int src, int dst, EdgeKind k) {
    return std::find(g.edges.begin(), g.edges.end(), Edge{src, dst, k}) != g.edges.end();
}

int count_kind(const EnrichedCfg& g, EdgeKind k) {
    int n = 0;
    for (const auto& e : g.edges) n += e.kind == k;
    return n;
}

std::vector<std::string> label_texts(const Vertex& vx, LabelCategory c) {
    std::vector<std::string> out;
    for (const Label& l : vx.labels) {
        if (l.category == c) out.push_back(l.text);
    }
    return out;
}

}  // namespace

TEST_CASE("function returning a constant builds the minimal graph") {
    Fixture fx("package p\n\nfunc f() int {\n\treturn 1\n}\n");
    EnrichedCfg g = fx.build_fn("f");

    CHECK(validate_cfg(g).empty());
    REQUIRE(g.vertices.size() == 4);
    CHECK(stmt_types(g) == std::vector<std::string>{"entry", "return", "exit"});
    CHECK(g.vertices[3].kind == VertexKind::Variable);
    CHECK(g.vertices[3].name == "result0");
    CHECK(g.vertices[3].has_label({LabelCategory::VariableType, "result"}));
    CHECK(g.vertices[3].has_label({LabelCategory::Datatype, "int"}));

    REQUIRE(g.edges.size() == 4);
    CHECK(has_edge(g, 0, 1, EdgeKind::Flow));
    CHECK(has_edge(g, 1, 2, EdgeKind::Flow));
    CHECK(has_edge(g, 0, 3, EdgeKind::Decl));
    CHECK(has_edge(g, 1, 3, EdgeKind::Assign));
}

TEST_CASE("three-part for splits into init, condition, and post vertices") {
    Fixture fx(
        "package p\n"
        "\n"
        "func f(n int) {\n"
        "\ts := 0\n"
        "\tfor i := 0; i < n; i++ {\n"
        "\t\ts += i\n"
        "\t}\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    CHECK(validate_cfg(g).empty());
    CHECK(stmt_types(g) == std::vector<std::string>{"entry", "short-decl", "short-decl", "for",
                                                    "inc-dec", "assign", "exit"});
    int n = var_id(g, "n"), s = var_id(g, "s"), i = var_id(g, "i");
    REQUIRE(n != -1);
    REQUIRE(s != -1);
    REQUIRE(i != -1);

    CHECK(has_edge(g, 2, 3, EdgeKind::Flow));     // init into condition
    CHECK(has_edge(g, 3, 5, EdgeKind::Flow));     // condition into body
    CHECK(has_edge(g, 5, 4, EdgeKind::Flow));     // body into post
    CHECK(has_edge(g, 4, 3, EdgeKind::Flow));     // post back to condition
    CHECK(has_edge(g, 3, 6, EdgeKind::AltFlow));  // condition exits the loop
    CHECK(count_kind(g, EdgeKind::AltFlow) == 1);

    CHECK(has_edge(g, 3, i, EdgeKind::DirUse));
    CHECK(has_edge(g, 3, n, EdgeKind::DirUse));
    CHECK(has_edge(g, 4, i, EdgeKind::Assign));
    CHECK(has_edge(g, 4, i, EdgeKind::DirUse));
    CHECK(has_edge(g, 5, s, EdgeKind::Assign));
    CHECK(has_edge(g, 5, s, EdgeKind::DirUse));

    CHECK(g.vertices[4].has_label({LabelCategory::Operator, "incdec/++"}));
    CHECK(g.vertices[5].has_label({LabelCategory::Operator, "assign/+="}));
    CHECK(g.vertices[3].has_label({LabelCategory::Operator, "binary/<"}));
}

TEST_CASE("if without else sends alt-flow to the successor") {
    Fixture fx(
        "package p\n"
        "\n"
        "func f(x int) int {\n"
        "\tif x > 0 {\n"
        "\t\treturn 1\n"
        "\t}\n"
        "\treturn 0\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    CHECK(validate_cfg(g).empty());
    CHECK(stmt_types(g) == std::vector<std::string>{"entry", "if", "return", "return", "exit"});
    CHECK(has_edge(g, 1, 2, EdgeKind::Flow));
    CHECK(has_edge(g, 1, 3, EdgeKind::AltFlow));
    CHECK(has_edge(g, 2, 4, EdgeKind::Flow));
    CHECK(has_edge(g, 3, 4, EdgeKind::Flow));
    CHECK(g.vertices[1].has_label({LabelCategory::Operator, "binary/>"}));

    int r = var_id(g, "result0");
    REQUIRE(r != -1);
    CHECK(has_edge(g, 2, r, EdgeKind::Assign));
    CHECK(has_edge(g, 3, r, EdgeKind::Assign));
}

TEST_CASE("if-else routes alt-flow into the else branch") {
    Fixture fx(
        "package p\n"
        "\n"
        "func f(x int) int {\n"
        "\tif x > 0 {\n"
        "\t\treturn 1\n"
        "\t} else {\n"
        "\t\treturn 0\n"
        "\t}\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    CHECK(validate_cfg(g).empty());
    CHECK(stmt_types(g) == std::vector<std::string>{"entry", "if", "return", "return", "exit"});
    CHECK(has_edge(g, 1, 2, EdgeKind::Flow));
    CHECK(has_edge(g, 1, 3, EdgeKind::AltFlow));
    CHECK(count_kind(g, EdgeKind::AltFlow) == 1);
}

TEST_CASE("bare infinite loop keeps flow without any alt-flow") {
    Fixture fx("package p\n\nfunc f() {\n\tfor {\n\t}\n}\n");
    EnrichedCfg g = fx.build_fn("f");

    CHECK(validate_cfg(g).empty());
    CHECK(stmt_types(g) == std::vector<std::string>{"entry", "for", "exit"});
    REQUIRE(g.edges.size() == 2);
    CHECK(has_edge(g, 0, 1, EdgeKind::Flow));
    CHECK(has_edge(g, 1, 1, EdgeKind::Flow));
    CHECK(count_kind(g, EdgeKind::AltFlow) == 0);
}

TEST_CASE("switch branches into case heads and alt-flows past them") {
    Fixture fx(
        "package p\n"
        "\n"
        "func f(x int) int {\n"
        "\tswitch x {\n"
        "\tcase 1:\n"
        "\t\treturn 1\n"
        "\tdefault:\n"
        "\t\treturn 0\n"
        "\t}\n"
        "\treturn 2\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    CHECK(validate_cfg(g).empty());
    CHECK(stmt_types(g) == std::vector<std::string>{"entry", "switch", "case", "return", "case",
                                                    "return", "return", "exit"});
    CHECK(has_edge(g, 1, 2, EdgeKind::Flow));
    CHECK(has_edge(g, 1, 4, EdgeKind::Flow));
    CHECK(has_edge(g, 1, 6, EdgeKind::AltFlow));
    CHECK(has_edge(g, 2, 3, EdgeKind::Flow));
    CHECK(has_edge(g, 4, 5, EdgeKind::Flow));
    CHECK(count_kind(g, EdgeKind::AltFlow) == 1);
    int x = var_id(g, "x");
    CHECK(has_edge(g, 1, x, EdgeKind::DirUse));
}

TEST_CASE("select builds the communication statement inside its case") {
    Fixture fx(
        "package p\n"
        "\n"
        "func f(ch chan int) {\n"
        "\tselect {\n"
        "\tcase v := <-ch:\n"
        "\t\t_ = v\n"
        "\tdefault:\n"
        "\t}\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    CHECK(validate_cfg(g).empty());
    CHECK(stmt_types(g) == std::vector<std::string>{"entry", "select", "case", "short-decl",
                                                    "assign", "case", "exit"});
    int ch = var_id(g, "ch"), v = var_id(g, "v");
    CHECK(has_edge(g, 1, 2, EdgeKind::Flow));
    CHECK(has_edge(g, 1, 5, EdgeKind::Flow));
    CHECK(has_edge(g, 1, 6, EdgeKind::AltFlow));
    CHECK(has_edge(g, 2, 3, EdgeKind::Flow));
    CHECK(has_edge(g, 3, 4, EdgeKind::Flow));
    CHECK(has_edge(g, 5, 6, EdgeKind::Flow));
    CHECK(has_edge(g, 3, v, EdgeKind::Decl));
    CHECK(has_edge(g, 3, v, EdgeKind::Assign));
    CHECK(has_edge(g, 3, ch, EdgeKind::DirUse));
    CHECK(has_edge(g, 4, v, EdgeKind::DirUse));
    CHECK(g.vertices[3].has_label({LabelCategory::Operator, "unary/<-"}));
    CHECK(var_id(g, "_") == -1);
}

TEST_CASE("field chains expand into use, dir-use, update, assign, contains") {
    Fixture fx(
        "package p\n"
        "\n"
        "func f(s *S) int {\n"
        "\ts.f1.f2.f3 = 1\n"
        "\treturn s.f1.f2.f3\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    CHECK(validate_cfg(g).empty());
    int s = var_id(g, "s"), f1 = var_id(g, "f1"), f2 = var_id(g, "f2"), f3 = var_id(g, "f3");
    REQUIRE(f3 != -1);
    int asg = stmt_id(g, "assign"), ret = stmt_id(g, "return");

    CHECK(has_edge(g, s, f1, EdgeKind::Contains));
    CHECK(has_edge(g, f1, f2, EdgeKind::Contains));
    CHECK(has_edge(g, f2, f3, EdgeKind::Contains));
    CHECK(count_kind(g, EdgeKind::Contains) == 3);

    CHECK(has_edge(g, asg, s, EdgeKind::Update));
    CHECK(has_edge(g, asg, f1, EdgeKind::Update));
    CHECK(has_edge(g, asg, f2, EdgeKind::Update));
    CHECK(has_edge(g, asg, f3, EdgeKind::Assign));
    CHECK(count_kind(g, EdgeKind::Update) == 3);

    CHECK(has_edge(g, ret, s, EdgeKind::Use));
    CHECK(has_edge(g, ret, f1, EdgeKind::Use));
    CHECK(has_edge(g, ret, f2, EdgeKind::Use));
    CHECK(has_edge(g, ret, f3, EdgeKind::DirUse));
    CHECK(count_kind(g, EdgeKind::Use) == 3);
    CHECK(count_kind(g, EdgeKind::DirUse) == 1);
}

TEST_CASE("label sets ignore expression structure") {
    Fixture fx(
        "package p\n"
        "\n"
        "func f(v int) int { return v }\n"
        "\n"
        "func g(v int) int { return v }\n"
        "\n"
        "func h1(a int, b int, c int) {\n"
        "\tvar x int\n"
        "\tx = f(a+b) * g(f(c))\n"
        "\t_ = x\n"
        "}\n"
        "\n"
        "func h2(a int, b int, c int) {\n"
        "\tvar x int\n"
        "\tx = g(a*f(b) + c)\n"
        "\t_ = x\n"
        "}\n");
    EnrichedCfg g1 = fx.build_fn("h1");
    EnrichedCfg g2 = fx.build_fn("h2");

    const Vertex& a1 = g1.vertices[stmt_id(g1, "assign")];
    const Vertex& a2 = g2.vertices[stmt_id(g2, "assign")];
    CHECK(a1.labels == a2.labels);

    CHECK(a1.has_label({LabelCategory::Operator, "assign/="}));
    CHECK(a1.has_label({LabelCategory::Operator, "binary/*"}));
    CHECK(a1.has_label({LabelCategory::Operator, "binary/+"}));
    CHECK(a1.has_label({LabelCategory::Function, "f"}));
    CHECK(a1.has_label({LabelCategory::Function, "g"}));
    CHECK(a1.has_label({LabelCategory::SelfRef, "package"}));
    CHECK(a1.has_label({LabelCategory::SelfRef, "module"}));
    CHECK(!a1.has_label({LabelCategory::SelfRef, "function"}));
}

TEST_CASE("recursive call earns the function self-reference") {
    Fixture fx(
        "package p\n"
        "\n"
        "func fact(n int) int {\n"
        "\tif n == 0 {\n"
        "\t\treturn 1\n"
        "\t}\n"
        "\treturn n * fact(n-1)\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("fact");

    const Vertex& base = g.vertices[stmt_id(g, "return", 0)];
    const Vertex& rec = g.vertices[stmt_id(g, "return", 1)];
    CHECK(!base.has_label({LabelCategory::SelfRef, "function"}));
    CHECK(rec.has_label({LabelCategory::Function, "fact"}));
    CHECK(rec.has_label({LabelCategory::SelfRef, "function"}));
    CHECK(rec.has_label({LabelCategory::SelfRef, "package"}));
    CHECK(rec.has_label({LabelCategory::SelfRef, "module"}));
    CHECK(rec.has_label({LabelCategory::Operator, "binary/*"}));
    CHECK(rec.has_label({LabelCategory::Operator, "binary/-"}));
}

TEST_CASE("global variable context is one declaration plus its variable") {
    Fixture fx(
        "package p\n"
        "\n"
        "type T struct {\n"
        "\tn int\n"
        "}\n"
        "\n"
        "var g = T{}\n");
    EnrichedCfg g = fx.build(fx.decl_context(NodeKind::GlobalVarDecl));

    CHECK(validate_cfg(g).empty());
    CHECK(g.context_type == CfgContextType::GlobalVariable);
    REQUIRE(g.vertices.size() == 2);
    CHECK(g.vertices[0].has_label({LabelCategory::StatementType, "declaration"}));
    CHECK(g.vertices[0].has_label({LabelCategory::Operator, "assign/="}));
    CHECK(g.vertices[0].has_label({LabelCategory::Datatype, "T"}));
    CHECK(g.vertices[1].name == "g");
    CHECK(g.vertices[1].has_label({LabelCategory::SelfRef, "variable"}));
    CHECK(g.vertices[1].has_label({LabelCategory::Datatype, "T"}));
    REQUIRE(g.edges.size() == 2);
    CHECK(has_edge(g, 0, 1, EdgeKind::Decl));
    CHECK(has_edge(g, 0, 1, EdgeKind::Assign));
}

TEST_CASE("recursive type definition earns the type self-reference") {
    Fixture fx(
        "package p\n"
        "\n"
        "type Node struct {\n"
        "\tnext *Node\n"
        "}\n");
    EnrichedCfg g = fx.build(fx.decl_context(NodeKind::TypeDecl));

    CHECK(validate_cfg(g).empty());
    CHECK(g.context_type == CfgContextType::TypeDefinition);
    REQUIRE(g.vertices.size() == 1);
    CHECK(g.edges.empty());
    const Vertex& vx = g.vertices[0];
    CHECK(vx.has_label({LabelCategory::StatementType, "declaration"}));
    CHECK(vx.has_label({LabelCategory::Datatype, "struct { next *Node }"}));
    CHECK(vx.has_label({LabelCategory::Datatype, "Struct"}));
    CHECK(vx.has_label({LabelCategory::Datatype, "Pointer"}));
    CHECK(vx.has_label({LabelCategory::Datatype, "Node"}));
    CHECK(vx.has_label({LabelCategory::SelfRef, "type"}));
}

TEST_CASE("composite type text decomposes into six labels") {
    auto labels = decompose_type("map[string]**[]int");
    std::vector<std::string> texts;
    for (const auto& l : labels) {
        CHECK(l.category == LabelCategory::Datatype);
        texts.push_back(l.text);
    }
    CHECK(texts == std::vector<std::string>{"Map", "Pointer", "Slice", "int",
                                            "map[string]**[]int", "string"});
}

TEST_CASE("type decomposition covers arrays, functions, and channels") {
    auto arr = decompose_type("[3]byte");
    std::vector<std::string> arr_texts;
    for (const auto& l : arr) arr_texts.push_back(l.text);
    CHECK(arr_texts == std::vector<std::string>{"Array", "[3]byte", "byte"});

    auto fn = decompose_type("func(int) *T");
    std::vector<std::string> fn_texts;
    for (const auto& l : fn) fn_texts.push_back(l.text);
    CHECK(fn_texts == std::vector<std::string>{"Func", "Pointer", "T", "func(int) *T", "int"});

    auto ch = decompose_type("chan unsafe.Pointer");
    std::vector<std::string> ch_texts;
    for (const auto& l : ch) ch_texts.push_back(l.text);
    CHECK(ch_texts ==
          std::vector<std::string>{"Chan", "chan unsafe.Pointer", "unsafe.Pointer"});

    CHECK(decompose_type("").empty());
}

TEST_CASE("usages map to the innermost covering statement vertex") {
    Fixture fx(
        "package p\n"
        "\n"
        "import \"unsafe\"\n"
        "\n"
        "func f(p *int) unsafe.Pointer {\n"
        "\treturn unsafe.Pointer(p)\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    CHECK(validate_cfg(g).empty());
    REQUIRE(g.usage_vertices.size() == 2);
    CHECK(g.usage_vertices[0].second == stmt_id(g, "entry"));
    CHECK(g.usage_vertices[1].second == stmt_id(g, "return"));
    CHECK(g.vertices[stmt_id(g, "return")].has_label(
        {LabelCategory::Datatype, "unsafe.Pointer"}));
}

TEST_CASE("several usages in one statement share a vertex") {
    Fixture fx(
        "package p\n"
        "\n"
        "import \"unsafe\"\n"
        "\n"
        "func f(p *int, q *int) uintptr {\n"
        "\treturn uintptr(unsafe.Pointer(p)) + uintptr(unsafe.Pointer(q))\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    REQUIRE(g.usage_vertices.size() == 4);
    int ret = stmt_id(g, "return");
    for (const auto& [site, id] : g.usage_vertices) CHECK(id == ret);
}

TEST_CASE("construction and serialization are deterministic") {
    const std::string text =
        "package p\n"
        "\n"
        "import \"unsafe\"\n"
        "\n"
        "func f(p *int) uintptr {\n"
        "\tq := unsafe.Pointer(p)\n"
        "\treturn uintptr(q) + unsafe.Sizeof(p)\n"
        "}\n";
    Fixture fx1(text);
    Fixture fx2(text);
    std::string d1 = dump_cfg(fx1.build_fn("f"));
    std::string d2 = dump_cfg(fx2.build_fn("f"));
    CHECK(d1 == d2);
    CHECK(d1.substr(0, 17) == "context\tfunction\n");
    CHECK(d1.find("edge\t0\t1\tflow\n") != std::string::npos);
    CHECK(d1.find("\tPointer\t") != std::string::npos);
    CHECK(d1.find("stmt-type/entry") != std::string::npos);
}

TEST_CASE("minimal function serializes to the expected lines") {
    Fixture fx("package p\n\nfunc f() int {\n\treturn 1\n}\n");
    std::string dump = dump_cfg(fx.build_fn("f"));
    const std::string expect =
        "context\tfunction\n"
        "vertex\t0\tstatement\t3:1-5:2\tstmt-type/entry\n"
        "vertex\t1\tstatement\t4:2-4:10\tstmt-type/return\n"
        "vertex\t2\tstatement\t-\tstmt-type/exit\n"
        "vertex\t3\tvariable\t-\tvar-type/result\tselfref/module\tselfref/package\t"
        "datatype/int\tvar-name/result0\n"
        "edge\t0\t1\tflow\n"
        "edge\t0\t3\tdecl\n"
        "edge\t1\t2\tflow\n"
        "edge\t1\t3\tassign\n";
    CHECK(dump == expect);
}

TEST_CASE("validation reports malformed graphs") {
    EnrichedCfg bad;
    bad.context_type = CfgContextType::Function;
    Vertex s;
    s.id = 0;
    s.kind = VertexKind::Statement;
    s.add_label({LabelCategory::StatementType, "entry"});
    bad.vertices.push_back(s);
    Vertex v;
    v.id = 1;
    v.kind = VertexKind::Variable;
    v.name = "x";
    v.add_label({LabelCategory::VariableName, "x"});
    bad.vertices.push_back(v);
    bad.edges.push_back({0, 1, EdgeKind::Contains});

    auto problems = validate_cfg(bad);
    auto mentions = [&](const std::string& needle) {
        for (const auto& p : problems) {
            if (p.find(needle) != std::string::npos) return true;
        }
        return false;
    };
    CHECK(problems.size() >= 3);
    CHECK(mentions("exit"));
    CHECK(mentions("contains"));
    CHECK(mentions("no outgoing flow"));
}

TEST_CASE("opaque or missing contexts are rejected") {
    Fixture fx("package p\n\nfunc f() {\n\tgoto done\n}\n");
    const AstNode* fn = fx.fn_context("f").node;
    const AstNode* body = nullptr;
    for (const auto& c : fn->children) {
        if (c->kind == NodeKind::Block) body = c.get();
    }
    REQUIRE(body != nullptr);
    REQUIRE(!body->children.empty());
    ContextRef opaque{ContextKind::FunctionBody, body->children[0].get()};
    CHECK_THROWS_AS(build_cfg(opaque, {}), UnsupportedContext);
    ContextRef missing{ContextKind::FunctionBody, nullptr};
    CHECK_THROWS_AS(build_cfg(missing, {}), UnsupportedContext);
}

TEST_CASE("calling through a function variable adds a call edge") {
    Fixture fx(
        "package p\n"
        "\n"
        "func f() {\n"
        "\tvar fp func()\n"
        "\tfp()\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    CHECK(validate_cfg(g).empty());
    CHECK(stmt_types(g) == std::vector<std::string>{"entry", "declare", "expr", "exit"});
    int fp = var_id(g, "fp");
    REQUIRE(fp != -1);
    CHECK(has_edge(g, 2, fp, EdgeKind::Call));
    CHECK(label_texts(g.vertices[2], LabelCategory::Function).empty());
    CHECK(g.vertices[fp].has_label({LabelCategory::Datatype, "Func"}));
}

TEST_CASE("package-qualified calls record function and package labels") {
    Fixture fx(
        "package p\n"
        "\n"
        "import (\n"
        "\t\"fmt\"\n"
        "\t\"os\"\n"
        ")\n"
        "\n"
        "func f() {\n"
        "\tfmt.Println(os.Args)\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    const Vertex& call = g.vertices[stmt_id(g, "expr")];
    CHECK(call.has_label({LabelCategory::Function, "fmt.Println"}));
    CHECK(call.has_label({LabelCategory::Package, "fmt"}));
    CHECK(!call.has_label({LabelCategory::SelfRef, "module"}));

    int args = var_id(g, "Args");
    REQUIRE(args != -1);
    CHECK(g.vertices[args].has_label({LabelCategory::Package, "os"}));
    CHECK(!g.vertices[args].has_label({LabelCategory::SelfRef, "module"}));
    CHECK(!g.vertices[args].has_label({LabelCategory::SelfRef, "package"}));
    CHECK(has_edge(g, stmt_id(g, "expr"), args, EdgeKind::DirUse));
}

TEST_CASE("imports under the module path count as module self-references") {
    Fixture fx(
        "package p\n"
        "\n"
        "import \"example.com/m/util\"\n"
        "\n"
        "func f() {\n"
        "\tutil.Do()\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    const Vertex& call = g.vertices[stmt_id(g, "expr")];
    CHECK(call.has_label({LabelCategory::Function, "example.com/m/util.Do"}));
    CHECK(call.has_label({LabelCategory::Package, "example.com/m/util"}));
    CHECK(call.has_label({LabelCategory::SelfRef, "module"}));
}

TEST_CASE("make records the builtin and its instantiated type") {
    Fixture fx(
        "package p\n"
        "\n"
        "func f() []int {\n"
        "\txs := make([]int, 4)\n"
        "\treturn xs\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    const Vertex& decl = g.vertices[stmt_id(g, "short-decl")];
    CHECK(decl.has_label({LabelCategory::Builtin, "make"}));
    CHECK(decl.has_label({LabelCategory::Datatype, "[]int"}));
    CHECK(decl.has_label({LabelCategory::Datatype, "Slice"}));
    CHECK(decl.has_label({LabelCategory::Datatype, "int"}));
    CHECK(label_texts(decl, LabelCategory::Function).empty());
}

TEST_CASE("method calls read the receiver and reference the package type") {
    Fixture fx(
        "package p\n"
        "\n"
        "type T struct {\n"
        "\tn int\n"
        "}\n"
        "\n"
        "func (t *T) Close() {}\n"
        "\n"
        "func f(t *T) {\n"
        "\tt.Close()\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    const Vertex& call = g.vertices[stmt_id(g, "expr")];
    CHECK(call.has_label({LabelCategory::Function, "Close"}));
    CHECK(call.has_label({LabelCategory::SelfRef, "package"}));
    int t = var_id(g, "t");
    REQUIRE(t != -1);
    CHECK(has_edge(g, stmt_id(g, "expr"), t, EdgeKind::DirUse));
}

TEST_CASE("range loops declare and assign their iteration variables") {
    Fixture fx(
        "package p\n"
        "\n"
        "func f(xs []int) int {\n"
        "\tsum := 0\n"
        "\tfor _, v := range xs {\n"
        "\t\tsum += v\n"
        "\t}\n"
        "\treturn sum\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    CHECK(validate_cfg(g).empty());
    CHECK(stmt_types(g) == std::vector<std::string>{"entry", "short-decl", "range", "assign",
                                                    "return", "exit"});
    int xs = var_id(g, "xs"), v = var_id(g, "v");
    REQUIRE(v != -1);
    CHECK(var_id(g, "_") == -1);
    int rng = stmt_id(g, "range");
    CHECK(has_edge(g, rng, v, EdgeKind::Decl));
    CHECK(has_edge(g, rng, v, EdgeKind::Assign));
    CHECK(has_edge(g, rng, xs, EdgeKind::DirUse));
    CHECK(has_edge(g, rng, stmt_id(g, "return"), EdgeKind::AltFlow));
    CHECK(has_edge(g, stmt_id(g, "assign"), rng, EdgeKind::Flow));
    CHECK(!g.vertices[rng].has_label({LabelCategory::Operator, "assign/="}));
}

TEST_CASE("defer and go statements keep their own statement types") {
    Fixture fx(
        "package p\n"
        "\n"
        "func f() {\n"
        "\tgo f()\n"
        "\tdefer f()\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    CHECK(validate_cfg(g).empty());
    CHECK(stmt_types(g) == std::vector<std::string>{"entry", "go", "defer", "exit"});
    CHECK(g.vertices[1].has_label({LabelCategory::Function, "f"}));
    CHECK(g.vertices[1].has_label({LabelCategory::SelfRef, "function"}));
    CHECK(g.vertices[2].has_label({LabelCategory::SelfRef, "function"}));
}

TEST_CASE("uninitialized declarations draw decl edges but no assign") {
    Fixture fx(
        "package p\n"
        "\n"
        "func f() {\n"
        "\tvar a, b int\n"
        "\t_ = a\n"
        "\t_ = b\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    CHECK(validate_cfg(g).empty());
    int a = var_id(g, "a"), b = var_id(g, "b");
    int decl = stmt_id(g, "declare");
    CHECK(has_edge(g, decl, a, EdgeKind::Decl));
    CHECK(has_edge(g, decl, b, EdgeKind::Decl));
    CHECK(!has_edge(g, decl, a, EdgeKind::Assign));
    CHECK(!g.vertices[decl].has_label({LabelCategory::Operator, "assign/="}));
    CHECK(g.vertices[a].has_label({LabelCategory::Datatype, "int"}));
}

TEST_CASE("nested blocks become block vertices in the flow") {
    Fixture fx(
        "package p\n"
        "\n"
        "func f() {\n"
        "\t{\n"
        "\t\tx := 1\n"
        "\t\t_ = x\n"
        "\t}\n"
        "}\n");
    EnrichedCfg g = fx.build_fn("f");

    CHECK(validate_cfg(g).empty());
    CHECK(stmt_types(g) ==
          std::vector<std::string>{"entry", "block", "short-decl", "assign", "exit"});
    CHECK(has_edge(g, 1, 2, EdgeKind::Flow));
    CHECK(has_edge(g, 2, 3, EdgeKind::Flow));
    CHECK(has_edge(g, 3, 4, EdgeKind::Flow));
}
