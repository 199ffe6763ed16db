#include "gounsafe/encoder.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

namespace gounsafe {

namespace {

using nlohmann::json;

std::uint64_t fnv1a(const std::string& s, std::uint64_t h) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t hash_list(const std::vector<std::string>& list, std::uint64_t h) {
    for (const std::string& s : list) {
        h = fnv1a(s, h);
        h = fnv1a("\x1f", h);
    }
    return fnv1a("\x1e", h);
}

std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

int find_in(const std::vector<std::string>& list, const std::string& text) {
    auto it = std::find(list.begin(), list.end(), text);
    return it == list.end() ? -1 : static_cast<int>(it - list.begin());
}

std::vector<std::string> string_list(const json& j) {
    std::vector<std::string> out;
    for (const auto& v : j) out.push_back(v.get<std::string>());
    return out;
}

// Frequency selection shared by the four infinite categories.
std::vector<std::string> top_k(const std::map<std::string, long>& counts, int k) {
    std::vector<std::pair<std::string, long>> entries(counts.begin(), counts.end());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(entries.size()) > k) entries.resize(k);
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (auto& [text, count] : entries) out.push_back(std::move(text));
    return out;
}

}  // namespace

int FiniteManifest::n_finite() const {
    return static_cast<int>(statement_types.size() + operators.size() + variable_types.size() +
                            self_refs.size() + builtins.size());
}

std::uint64_t FiniteManifest::hash() const {
    std::uint64_t h = fnv1a(std::to_string(version), 1469598103934665603ULL);
    h = hash_list(statement_types, h);
    h = hash_list(operators, h);
    h = hash_list(variable_types, h);
    h = hash_list(self_refs, h);
    h = hash_list(builtins, h);
    return h;
}

std::string FiniteManifest::to_json() const {
    json j;
    j["version"] = version;
    j["hash"] = hash_hex(hash());
    j["categories"]["statement-types"] = statement_types;
    j["categories"]["operators"] = operators;
    j["categories"]["variable-types"] = variable_types;
    j["categories"]["self-references"] = self_refs;
    j["categories"]["builtins"] = builtins;
    return j.dump(2) + "\n";
}

FiniteManifest FiniteManifest::from_json(const std::string& text) {
    json j = json::parse(text);
    FiniteManifest m;
    m.version = j.at("version").get<int>();
    const json& c = j.at("categories");
    m.statement_types = string_list(c.at("statement-types"));
    m.operators = string_list(c.at("operators"));
    m.variable_types = string_list(c.at("variable-types"));
    m.self_refs = string_list(c.at("self-references"));
    m.builtins = string_list(c.at("builtins"));
    if (j.contains("hash") && j["hash"].get<std::string>() != hash_hex(m.hash()))
        throw std::runtime_error("finite manifest hash mismatch");
    return m;
}

const FiniteManifest& FiniteManifest::builtin() {
    static const FiniteManifest m = [] {
        FiniteManifest m;
        m.version = 1;
        m.statement_types = {"entry",  "exit",   "declaration", "declare", "assign",
                             "short-decl", "inc-dec", "if",      "for",     "range",
                             "switch", "case",   "select",      "return",  "expr",
                             "defer",  "go",     "block",       "empty"};
        m.operators = {"binary/||", "binary/&&", "binary/==", "binary/!=", "binary/<",
                       "binary/<=", "binary/>",  "binary/>=", "binary/+",  "binary/-",
                       "binary/*",  "binary//",  "binary/%",  "binary/&",  "binary/|",
                       "binary/^",  "binary/<<", "binary/>>", "binary/&^", "unary/+",
                       "unary/-",   "unary/!",   "unary/^",   "unary/*",   "unary/&",
                       "unary/<-",  "incdec/++", "incdec/--", "assign/=",  "assign/+=",
                       "assign/-=", "assign/*=", "assign//=", "assign/%=", "assign/&=",
                       "assign/|=", "assign/^=", "assign/<<=", "assign/>>=", "assign/&^="};
        m.variable_types = {"param", "result", "receiver"};
        m.self_refs = {"function", "module", "package", "type", "variable"};
        m.builtins = {"append", "cap",  "close", "complex", "copy",    "delete",
                      "imag",   "len",  "make",  "new",     "panic",   "print",
                      "println", "real", "recover"};
        return m;
    }();
    return m;
}

const char* feature_subset_name(FeatureSubset s) {
    switch (s) {
        case FeatureSubset::All: return "all";
        case FeatureSubset::None: return "none";
        case FeatureSubset::OnlyVars: return "only-vars";
        case FeatureSubset::OnlyTypes: return "only-types";
        case FeatureSubset::OnlyFuncs: return "only-funcs";
        case FeatureSubset::OnlyPkgs: return "only-pkgs";
    }
    return "?";
}

FeatureSubset feature_subset_from_name(const std::string& name) {
    for (FeatureSubset s : feature_subsets()) {
        if (name == feature_subset_name(s)) return s;
    }
    throw std::invalid_argument("unknown feature subset: " + name);
}

std::vector<FeatureSubset> feature_subsets() {
    return {FeatureSubset::All,       FeatureSubset::None,      FeatureSubset::OnlyVars,
            FeatureSubset::OnlyTypes, FeatureSubset::OnlyFuncs, FeatureSubset::OnlyPkgs};
}

bool category_kept(FeatureSubset s, LabelCategory c) {
    if (s == FeatureSubset::All) return true;
    if (c == LabelCategory::StatementType || c == LabelCategory::SelfRef) return true;
    switch (s) {
        case FeatureSubset::OnlyVars:
            return c == LabelCategory::VariableName;
        case FeatureSubset::OnlyTypes:
            return c == LabelCategory::Datatype;
        case FeatureSubset::OnlyFuncs:
            return c == LabelCategory::Function || c == LabelCategory::Operator ||
                   c == LabelCategory::Builtin;
        case FeatureSubset::OnlyPkgs:
            return c == LabelCategory::Package;
        default:
            return false;
    }
}

bool keeps_variable_vertices(FeatureSubset s) {
    return s == FeatureSubset::All || s == FeatureSubset::OnlyVars;
}

int LabelVocabulary::index_of(const Label& label) const {
    const int st = static_cast<int>(finite.statement_types.size());
    const int op = static_cast<int>(finite.operators.size());
    const int vt = static_cast<int>(finite.variable_types.size());
    const int sr = static_cast<int>(finite.self_refs.size());
    const int bi = static_cast<int>(finite.builtins.size());
    const int nf = st + op + vt + sr + bi;

    const std::vector<std::string>* list = nullptr;
    int base = 0;
    switch (label.category) {
        case LabelCategory::StatementType: list = &finite.statement_types; base = 0; break;
        case LabelCategory::Operator: list = &finite.operators; base = st; break;
        case LabelCategory::VariableType: list = &finite.variable_types; base = st + op; break;
        case LabelCategory::SelfRef: list = &finite.self_refs; base = st + op + vt; break;
        case LabelCategory::Builtin: list = &finite.builtins; base = st + op + vt + sr; break;
        case LabelCategory::Datatype: list = &datatypes; base = nf; break;
        case LabelCategory::Function: list = &functions; base = nf + (k + 1); break;
        case LabelCategory::Package: list = &packages; base = nf + 2 * (k + 1); break;
        case LabelCategory::VariableName: list = &variable_names; base = nf + 3 * (k + 1); break;
    }
    int idx = find_in(*list, label.text);
    bool infinite = label.category == LabelCategory::Datatype ||
                    label.category == LabelCategory::Function ||
                    label.category == LabelCategory::Package ||
                    label.category == LabelCategory::VariableName;
    if (idx < 0) {
        if (infinite) return base + k;  // the category's `other` slot
        throw UnknownFiniteLabel("finite label not in manifest: " + label_to_string(label));
    }
    return base + idx;
}

std::uint64_t LabelVocabulary::hash() const {
    std::uint64_t h = finite.hash();
    h = fnv1a(std::to_string(k), h);
    h = hash_list(datatypes, h);
    h = hash_list(functions, h);
    h = hash_list(packages, h);
    h = hash_list(variable_names, h);
    return h;
}

std::string LabelVocabulary::to_json() const {
    json j;
    j["k"] = k;
    j["hash"] = hash_hex(hash());
    j["finite"] = json::parse(finite.to_json());
    j["datatypes"] = datatypes;
    j["functions"] = functions;
    j["packages"] = packages;
    j["variable-names"] = variable_names;
    return j.dump(2) + "\n";
}

LabelVocabulary LabelVocabulary::from_json(const std::string& text) {
    json j = json::parse(text);
    LabelVocabulary v;
    v.k = j.at("k").get<int>();
    v.finite = FiniteManifest::from_json(j.at("finite").dump());
    v.datatypes = string_list(j.at("datatypes"));
    v.functions = string_list(j.at("functions"));
    v.packages = string_list(j.at("packages"));
    v.variable_names = string_list(j.at("variable-names"));
    if (j.contains("hash") && j["hash"].get<std::string>() != hash_hex(v.hash()))
        throw std::runtime_error("vocabulary hash mismatch");
    return v;
}

LabelVocabulary build_vocabulary(const std::vector<const EnrichedCfg*>& training_graphs, int k) {
    if (k < 1) throw std::invalid_argument("top-k cutoff must be at least 1");
    if (training_graphs.empty()) throw std::invalid_argument("no training graphs");

    std::map<std::string, long> datatypes, functions, packages, variable_names;
    for (const EnrichedCfg* g : training_graphs) {
        for (const Vertex& vx : g->vertices) {
            for (const Label& l : vx.labels) {
                switch (l.category) {
                    case LabelCategory::Datatype: ++datatypes[l.text]; break;
                    case LabelCategory::Function: ++functions[l.text]; break;
                    case LabelCategory::Package: ++packages[l.text]; break;
                    case LabelCategory::VariableName: ++variable_names[l.text]; break;
                    default: break;
                }
            }
        }
    }

    LabelVocabulary v;
    v.finite = FiniteManifest::builtin();
    v.k = k;
    v.datatypes = top_k(datatypes, k);
    v.functions = top_k(functions, k);
    v.packages = top_k(packages, k);
    v.variable_names = top_k(variable_names, k);
    return v;
}

LabelVocabulary build_vocabulary(const std::vector<EnrichedCfg>& training_graphs, int k) {
    std::vector<const EnrichedCfg*> ptrs;
    ptrs.reserve(training_graphs.size());
    for (const EnrichedCfg& g : training_graphs) ptrs.push_back(&g);
    return build_vocabulary(ptrs, k);
}

Tensor EncodedInstance::feature_tensor() const {
    Tensor t = Tensor::zeros(num_vertices, n);
    for (int i = 0; i < num_vertices * n; ++i) t.data()[i] = features[i];
    return t;
}

std::string EncodedInstance::to_json() const {
    json j;
    j["n"] = n;
    j["vertices"] = num_vertices;
    json rows = json::array();
    for (int r = 0; r < num_vertices; ++r) {
        json set = json::array();
        for (int c = 0; c < n; ++c) {
            if (features[r * n + c]) set.push_back(c);
        }
        rows.push_back(std::move(set));
    }
    j["rows"] = std::move(rows);
    json e;
    for (int kind = 0; kind < kEdgeKindCount; ++kind) {
        json pairs = json::array();
        for (const auto& [src, dst] : edges[kind]) pairs.push_back({src, dst});
        e[edge_kind_name(static_cast<EdgeKind>(kind))] = std::move(pairs);
    }
    j["edges"] = std::move(e);
    j["usage_vertex"] = usage_vertex;
    int context = 0;
    for (int i = 0; i < 3; ++i) {
        if (context_onehot[i] > 0.5) context = i;
    }
    j["context"] = context;
    j["gold_what"] = gold_what;
    j["gold_why"] = gold_why;
    return j.dump();
}

EncodedInstance EncodedInstance::from_json(const std::string& text) {
    json j = json::parse(text);
    EncodedInstance inst;
    inst.n = j.at("n").get<int>();
    inst.num_vertices = j.at("vertices").get<int>();
    inst.features.assign(static_cast<std::size_t>(inst.num_vertices) * inst.n, 0);
    int r = 0;
    for (const auto& row : j.at("rows")) {
        for (const auto& c : row) inst.features[r * inst.n + c.get<int>()] = 1;
        ++r;
    }
    for (int kind = 0; kind < kEdgeKindCount; ++kind) {
        const char* name = edge_kind_name(static_cast<EdgeKind>(kind));
        if (!j.at("edges").contains(name)) continue;
        for (const auto& pair : j["edges"][name])
            inst.edges[kind].emplace_back(pair[0].get<int>(), pair[1].get<int>());
    }
    inst.usage_vertex = j.at("usage_vertex").get<int>();
    inst.context_onehot[j.at("context").get<int>()] = 1.0;
    inst.gold_what = j.value("gold_what", -1);
    inst.gold_why = j.value("gold_why", -1);
    return inst;
}

EncodedInstance encode_graph(const EnrichedCfg& cfg, const LabelVocabulary& vocab,
                             FeatureSubset mask) {
    if (cfg.usage_vertices.empty())
        throw std::invalid_argument("graph has no usage sites to encode");
    return encode_graph(cfg, cfg.usage_vertices.front().second, vocab, mask);
}

EncodedInstance encode_graph(const EnrichedCfg& cfg, int usage_vertex,
                             const LabelVocabulary& vocab, FeatureSubset mask) {
    const bool keep_vars = keeps_variable_vertices(mask);
    std::vector<int> remap(cfg.vertices.size(), -1);
    int rows = 0;
    for (const Vertex& vx : cfg.vertices) {
        if (vx.kind == VertexKind::Variable && !keep_vars) continue;
        remap[vx.id] = rows++;
    }

    EncodedInstance inst;
    inst.n = vocab.n();
    inst.num_vertices = rows;
    inst.features.assign(static_cast<std::size_t>(rows) * inst.n, 0);
    for (const Vertex& vx : cfg.vertices) {
        int row = remap[vx.id];
        if (row < 0) continue;
        for (const Label& l : vx.labels) {
            if (!category_kept(mask, l.category)) continue;
            inst.features[static_cast<std::size_t>(row) * inst.n + vocab.index_of(l)] = 1;
        }
    }
    for (const Edge& e : cfg.edges) {
        int src = remap[e.src], dst = remap[e.dst];
        if (src < 0 || dst < 0) continue;
        inst.edges[static_cast<int>(e.kind)].emplace_back(src, dst);
    }
    inst.usage_vertex = usage_vertex >= 0 ? remap[usage_vertex] : -1;
    inst.context_onehot[static_cast<int>(cfg.context_type)] = 1.0;
    return inst;
}

}  // namespace gounsafe
