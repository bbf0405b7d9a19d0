#pragma once

#include <map>
#include <string>
#include <vector>

#include "hsdnet/chain.hpp"
#include "hsdnet/data.hpp"
#include "hsdnet/sensitivity.hpp"
#include "hsdnet/tree.hpp"

namespace hsdnet {

// Container layout: magic "HSDT", version u32, then tagged sections
// ("META" strings, "TENS" named tensors, "TOPO" tree topology, "ISCV" score
// tables). All integers and 64-bit float payloads are little-endian.

void save_chain(const ChainNet& net, const std::string& path);
ChainNet load_chain(const std::string& path);

void save_tree(const TreeNet& tree, const std::string& path);
TreeNet load_tree(const std::string& path);

void save_iscv(const std::map<int, IscvTable>& tables, const std::vector<std::string>& class_list,
               const std::string& path);
std::map<int, IscvTable> load_iscv(const std::string& path,
                                   std::vector<std::string>* class_list = nullptr);

void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

// "chain", "tree", "iscv" or "dataset" from the file's META section.
std::string container_kind(const std::string& path);

}  // namespace hsdnet
