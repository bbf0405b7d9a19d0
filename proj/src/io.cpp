#include "hsdnet/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hsdnet {

namespace {

constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "container writer assumes a little-endian host");

struct Writer {
    std::string buf;

    void u32(std::uint32_t v) { buf.append(reinterpret_cast<const char*>(&v), 4); }
    void u64(std::uint64_t v) { buf.append(reinterpret_cast<const char*>(&v), 8); }
    void f64s(const double* p, std::size_t n) {
        buf.append(reinterpret_cast<const char*>(p), n * sizeof(double));
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf.append(s);
    }
    void bytes(const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); }
};

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    std::string context;

    void need(std::size_t n, const char* what) {
        if (pos + n > buf.size()) {
            throw std::runtime_error("truncated file while reading " + std::string(what) + " in " +
                                     context + " at byte " + std::to_string(pos));
        }
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v;
        std::memcpy(&v, buf.data() + pos, 4);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v;
        std::memcpy(&v, buf.data() + pos, 8);
        pos += 8;
        return v;
    }
    std::string str(const char* what) {
        const std::uint32_t n = u32(what);
        need(n, what);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    void f64s(double* p, std::size_t n, const char* what) {
        need(n * sizeof(double), what);
        std::memcpy(p, buf.data() + pos, n * sizeof(double));
        pos += n * sizeof(double);
    }
    bool done() const { return pos >= buf.size(); }
};

using MetaMap = std::map<std::string, std::string>;

void write_meta(Writer& w, const MetaMap& meta) {
    Writer body;
    body.u32(static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        body.str(k);
        body.str(v);
    }
    w.bytes("META", 4);
    w.u64(body.buf.size());
    w.buf.append(body.buf);
}

void write_tensors(Writer& w, const ParamStore& store) {
    Writer body;
    body.u32(static_cast<std::uint32_t>(store.entries.size()));
    for (const auto& [name, t] : store.entries) {
        body.str(name);
        body.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (int e : t.shape) body.u64(static_cast<std::uint64_t>(e));
        body.f64s(t.ptr(), t.data.size());
    }
    w.bytes("TENS", 4);
    w.u64(body.buf.size());
    w.buf.append(body.buf);
}

MetaMap read_meta(Reader& r) {
    MetaMap meta;
    const std::uint32_t n = r.u32("meta count");
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string k = r.str("meta key");
        meta[k] = r.str("meta value");
    }
    return meta;
}

ParamStore read_tensors(Reader& r) {
    ParamStore store;
    const std::uint32_t n = r.u32("tensor count");
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = r.str("tensor name");
        const std::uint32_t rank = r.u32("tensor rank");
        if (rank > 4) {
            throw std::runtime_error("tensor " + name + " has rank " + std::to_string(rank));
        }
        std::vector<int> shape;
        std::uint64_t count = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint64_t e = r.u64("tensor extent");
            shape.push_back(static_cast<int>(e));
            count *= e;
        }
        Tensor t(shape);
        r.f64s(t.ptr(), static_cast<std::size_t>(count), name.c_str());
        store.put(name, std::move(t));
    }
    return store;
}

struct Container {
    MetaMap meta;
    ParamStore tensors;
    std::vector<TreeNode> topo;
    bool has_topo = false;
    std::map<int, IscvTable> iscv;
    bool has_iscv = false;
};

void write_file(const std::string& path, const std::string& payload) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) {
        throw std::runtime_error("write failed for " + path);
    }
}

Container read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r{buf, 0, path};
    r.need(4, "magic");
    if (buf.compare(0, 4, "HSDT") != 0) {
        throw std::runtime_error(path + ": bad magic (not an HSDT container)");
    }
    r.pos = 4;
    const std::uint32_t version = r.u32("version");
    if (version != kVersion) {
        throw std::runtime_error(path + ": unsupported container version " + std::to_string(version));
    }

    Container c;
    while (!r.done()) {
        r.need(4, "section tag");
        std::string tag = buf.substr(r.pos, 4);
        r.pos += 4;
        const std::uint64_t len = r.u64("section length");
        r.need(static_cast<std::size_t>(len), ("section " + tag).c_str());
        const std::size_t section_end = r.pos + static_cast<std::size_t>(len);
        if (tag == "META") {
            c.meta = read_meta(r);
        } else if (tag == "TENS") {
            c.tensors = read_tensors(r);
        } else if (tag == "TOPO") {
            const std::uint32_t count = r.u32("node count");
            for (std::uint32_t i = 0; i < count; ++i) {
                TreeNode n;
                n.id = static_cast<int>(r.u32("node id"));
                const std::uint32_t parent = r.u32("node parent");
                n.parent = parent == 0xFFFFFFFFu ? -1 : static_cast<int>(parent);
                n.layer = static_cast<int>(r.u32("node layer"));
                const std::uint32_t classes = r.u32("class count");
                for (std::uint32_t j = 0; j < classes; ++j) {
                    n.class_set.push_back(static_cast<int>(r.u32("class id")));
                }
                const std::uint32_t chans = r.u32("channel count");
                for (std::uint32_t j = 0; j < chans; ++j) {
                    n.channels.push_back(static_cast<int>(r.u32("channel id")));
                }
                c.topo.push_back(std::move(n));
            }
            c.has_topo = true;
        } else if (tag == "ISCV") {
            const std::uint32_t count = r.u32("table count");
            for (std::uint32_t i = 0; i < count; ++i) {
                IscvTable t;
                t.layer = static_cast<int>(r.u32("table layer"));
                const std::uint32_t rows = r.u32("table rows");
                t.channels = static_cast<int>(r.u32("table cols"));
                t.present.resize(rows);
                for (std::uint32_t j = 0; j < rows; ++j) {
                    r.need(1, "presence flag");
                    t.present[j] = buf[r.pos++] != 0;
                }
                t.raw.assign(rows, std::vector<double>(static_cast<std::size_t>(t.channels)));
                t.norm.assign(rows, std::vector<double>(static_cast<std::size_t>(t.channels)));
                for (std::uint32_t j = 0; j < rows; ++j) {
                    r.f64s(t.raw[j].data(), t.raw[j].size(), "raw scores");
                }
                for (std::uint32_t j = 0; j < rows; ++j) {
                    r.f64s(t.norm[j].data(), t.norm[j].size(), "normalized scores");
                }
                c.iscv[t.layer] = std::move(t);
            }
            c.has_iscv = true;
        } else {
            r.pos = section_end;  // unknown sections are skippable by design
        }
        if (r.pos != section_end) {
            throw std::runtime_error(path + ": malformed section " + tag);
        }
    }
    return c;
}

std::string header() {
    Writer w;
    w.bytes("HSDT", 4);
    w.u32(kVersion);
    return w.buf;
}

std::string join_ints(const std::vector<int>& v, char sep) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << sep;
        os << v[i];
    }
    return os.str();
}

std::vector<int> split_ints(const std::string& s, char sep) {
    std::vector<int> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        out.push_back(std::stoi(item));
    }
    return out;
}

std::string join_strings(const std::vector<std::string>& v, char sep) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << sep;
        os << v[i];
    }
    return os.str();
}

std::vector<std::string> split_strings(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        out.push_back(item);
    }
    return out;
}

LayerKind kind_from_name(const std::string& name) {
    for (LayerKind k : {LayerKind::Conv3x3, LayerKind::Conv1x1, LayerKind::Relu,
                        LayerKind::MaxPool2x2, LayerKind::GlobalAvgPool, LayerKind::Dense,
                        LayerKind::Softmax}) {
        if (name == layer_kind_name(k)) return k;
    }
    throw std::runtime_error("unknown layer kind: " + name);
}

const std::string& meta_at(const MetaMap& meta, const std::string& key, const std::string& path) {
    auto it = meta.find(key);
    if (it == meta.end()) {
        throw std::runtime_error(path + ": missing META entry " + key);
    }
    return it->second;
}

}  // namespace

void save_chain(const ChainNet& net, const std::string& path) {
    Writer w;
    w.buf = header();
    MetaMap meta;
    meta["kind"] = "chain";
    meta["input"] = join_ints({net.input_shape[0], net.input_shape[1], net.input_shape[2]}, ',');
    meta["classes"] = join_strings(net.class_list, ',');
    std::vector<std::string> layers;
    for (const auto& l : net.layers) {
        std::ostringstream os;
        os << layer_kind_name(l.kind) << ":" << l.in_channels << ":" << l.out_channels << ":"
           << l.stride << ":" << l.padding << ":" << (l.affine ? 1 : 0);
        layers.push_back(os.str());
    }
    meta["layers"] = join_strings(layers, ';');
    write_meta(w, meta);
    write_tensors(w, net.params);
    write_file(path, w.buf);
}

ChainNet load_chain(const std::string& path) {
    Container c = read_file(path);
    if (meta_at(c.meta, "kind", path) != "chain") {
        throw std::runtime_error(path + ": container holds a " + c.meta["kind"] + ", not a chain");
    }
    ChainNet net;
    const std::vector<int> input = split_ints(meta_at(c.meta, "input", path), ',');
    net.input_shape = {input[0], input[1], input[2]};
    net.class_list = split_strings(meta_at(c.meta, "classes", path), ',');
    for (const std::string& rec : split_strings(meta_at(c.meta, "layers", path), ';')) {
        const std::vector<std::string> f = split_strings(rec, ':');
        if (f.size() != 6) {
            throw std::runtime_error(path + ": malformed layer record " + rec);
        }
        LayerSpec l;
        l.kind = kind_from_name(f[0]);
        l.in_channels = std::stoi(f[1]);
        l.out_channels = std::stoi(f[2]);
        l.stride = std::stoi(f[3]);
        l.padding = std::stoi(f[4]);
        l.affine = f[5] == "1";
        net.layers.push_back(l);
    }
    net.params = std::move(c.tensors);
    return net;
}

void save_tree(const TreeNet& tree, const std::string& path) {
    Writer w;
    w.buf = header();
    MetaMap meta;
    meta["kind"] = "tree";
    meta["input"] = join_ints({tree.input_shape[0], tree.input_shape[1], tree.input_shape[2]}, ',');
    meta["classes"] = join_strings(tree.class_list, ',');
    std::vector<std::string> stages;
    for (const auto& st : tree.stages) {
        std::ostringstream os;
        os << layer_kind_name(st.kind) << ":" << st.width << ":" << st.stride << ":" << st.padding
           << ":" << (st.pool_after ? 1 : 0) << ":" << (st.affine ? 1 : 0);
        stages.push_back(os.str());
    }
    meta["stages"] = join_strings(stages, ';');
    write_meta(w, meta);

    Writer body;
    body.u32(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const auto& n : tree.nodes) {
        body.u32(static_cast<std::uint32_t>(n.id));
        body.u32(n.parent < 0 ? 0xFFFFFFFFu : static_cast<std::uint32_t>(n.parent));
        body.u32(static_cast<std::uint32_t>(n.layer));
        body.u32(static_cast<std::uint32_t>(n.class_set.size()));
        for (int v : n.class_set) body.u32(static_cast<std::uint32_t>(v));
        body.u32(static_cast<std::uint32_t>(n.channels.size()));
        for (int v : n.channels) body.u32(static_cast<std::uint32_t>(v));
    }
    w.bytes("TOPO", 4);
    w.u64(body.buf.size());
    w.buf.append(body.buf);

    write_tensors(w, tree.edges);
    write_file(path, w.buf);
}

TreeNet load_tree(const std::string& path) {
    Container c = read_file(path);
    if (meta_at(c.meta, "kind", path) != "tree") {
        throw std::runtime_error(path + ": container holds a " + c.meta["kind"] + ", not a tree");
    }
    if (!c.has_topo) {
        throw std::runtime_error(path + ": tree container lacks a TOPO section");
    }
    TreeNet tree;
    const std::vector<int> input = split_ints(meta_at(c.meta, "input", path), ',');
    tree.input_shape = {input[0], input[1], input[2]};
    tree.class_list = split_strings(meta_at(c.meta, "classes", path), ',');
    for (const std::string& rec : split_strings(meta_at(c.meta, "stages", path), ';')) {
        const std::vector<std::string> f = split_strings(rec, ':');
        if (f.size() != 6) {
            throw std::runtime_error(path + ": malformed stage record " + rec);
        }
        ConvStage st;
        st.kind = kind_from_name(f[0]);
        st.width = std::stoi(f[1]);
        st.stride = std::stoi(f[2]);
        st.padding = std::stoi(f[3]);
        st.pool_after = f[4] == "1";
        st.affine = f[5] == "1";
        tree.stages.push_back(st);
    }
    tree.nodes = std::move(c.topo);
    for (const auto& n : tree.nodes) {
        if (n.parent >= 0) {
            tree.nodes[static_cast<std::size_t>(n.parent)].children.push_back(n.id);
        }
    }
    tree.edges = std::move(c.tensors);
    return tree;
}

void save_iscv(const std::map<int, IscvTable>& tables, const std::vector<std::string>& class_list,
               const std::string& path) {
    Writer w;
    w.buf = header();
    MetaMap meta;
    meta["kind"] = "iscv";
    meta["classes"] = join_strings(class_list, ',');
    write_meta(w, meta);

    Writer body;
    body.u32(static_cast<std::uint32_t>(tables.size()));
    for (const auto& [layer, t] : tables) {
        body.u32(static_cast<std::uint32_t>(layer));
        body.u32(static_cast<std::uint32_t>(t.raw.size()));
        body.u32(static_cast<std::uint32_t>(t.channels));
        for (std::size_t j = 0; j < t.raw.size(); ++j) {
            const char flag = t.present[j] ? 1 : 0;
            body.bytes(&flag, 1);
        }
        for (const auto& row : t.raw) body.f64s(row.data(), row.size());
        if (t.norm.size() != t.raw.size()) {
            throw std::runtime_error("save_iscv: table for layer " + std::to_string(layer) +
                                     " is not normalized");
        }
        for (const auto& row : t.norm) body.f64s(row.data(), row.size());
    }
    w.bytes("ISCV", 4);
    w.u64(body.buf.size());
    w.buf.append(body.buf);
    write_file(path, w.buf);
}

std::map<int, IscvTable> load_iscv(const std::string& path, std::vector<std::string>* class_list) {
    Container c = read_file(path);
    if (meta_at(c.meta, "kind", path) != "iscv") {
        throw std::runtime_error(path + ": container holds a " + c.meta["kind"] + ", not score tables");
    }
    if (!c.has_iscv) {
        throw std::runtime_error(path + ": container lacks an ISCV section");
    }
    if (class_list) *class_list = split_strings(meta_at(c.meta, "classes", path), ',');
    return std::move(c.iscv);
}

void save_dataset(const Dataset& data, const std::string& path) {
    Writer w;
    w.buf = header();
    MetaMap meta;
    meta["kind"] = "dataset";
    meta["classes"] = join_strings(data.class_list, ',');
    meta["split"] = data.split;
    write_meta(w, meta);

    const auto shape = data.image_shape();
    ParamStore store;
    Tensor images({data.size(), shape[0], shape[1], shape[2]});
    const std::int64_t stride = static_cast<std::int64_t>(shape[0]) * shape[1] * shape[2];
    for (int i = 0; i < data.size(); ++i) {
        std::copy(data.images[static_cast<std::size_t>(i)].data.begin(),
                  data.images[static_cast<std::size_t>(i)].data.end(),
                  images.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    Tensor labels({data.size()});
    for (int i = 0; i < data.size(); ++i) {
        labels.data[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(i)];
    }
    store.put("images", std::move(images));
    store.put("labels", std::move(labels));
    write_tensors(w, store);
    write_file(path, w.buf);
}

Dataset load_dataset(const std::string& path) {
    Container c = read_file(path);
    if (meta_at(c.meta, "kind", path) != "dataset") {
        throw std::runtime_error(path + ": container holds a " + c.meta["kind"] + ", not a dataset");
    }
    Dataset data;
    data.class_list = split_strings(meta_at(c.meta, "classes", path), ',');
    data.split = meta_at(c.meta, "split", path);
    const Tensor& images = c.tensors.at("images");
    const Tensor& labels = c.tensors.at("labels");
    const int n = images.shape[0];
    const std::int64_t stride = static_cast<std::int64_t>(images.shape[1]) * images.shape[2] *
                                images.shape[3];
    for (int i = 0; i < n; ++i) {
        Tensor img({images.shape[1], images.shape[2], images.shape[3]});
        std::copy(images.data.begin() + static_cast<std::ptrdiff_t>(i * stride),
                  images.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride),
                  img.data.begin());
        data.images.push_back(std::move(img));
        data.labels.push_back(static_cast<int>(labels.data[static_cast<std::size_t>(i)]));
    }
    return data;
}

std::string container_kind(const std::string& path) {
    Container c = read_file(path);
    return meta_at(c.meta, "kind", path);
}

}  // namespace hsdnet
