#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

namespace semithick {

struct CheckItem {
  std::string name;
  bool pass = false;
  double value = std::numeric_limits<double>::quiet_NaN();
  double bound = std::numeric_limits<double>::quiet_NaN();
  std::string detail;  // first counterexample or a short note
};

struct Report {
  std::string title;
  std::vector<CheckItem> items;

  CheckItem& add(std::string name, bool pass, double value = NAN, double bound = NAN, std::string detail = {}) {
    items.push_back({std::move(name), pass, value, bound, std::move(detail)});
    return items.back();
  }
  void merge(const Report& other, const std::string& prefix = {}) {
    for (auto it : other.items) {
      it.name = prefix + it.name;
      items.push_back(std::move(it));
    }
  }
  bool pass() const {
    for (auto& i : items)
      if (!i.pass) return false;
    return true;
  }
  const CheckItem* find(const std::string& name) const {
    for (auto& i : items)
      if (i.name == name) return &i;
    return nullptr;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["title"] = title;
    j["pass"] = pass();
    auto& arr = j["items"] = nlohmann::ordered_json::array();
    for (auto& i : items) {
      nlohmann::ordered_json e;
      e["name"] = i.name;
      e["pass"] = i.pass;
      if (std::isfinite(i.value)) e["value"] = i.value;
      if (std::isfinite(i.bound)) e["bound"] = i.bound;
      if (!i.detail.empty()) e["detail"] = i.detail;
      arr.push_back(std::move(e));
    }
    return j;
  }
};

}  // namespace semithick
