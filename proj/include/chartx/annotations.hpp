#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chartx/geometry.hpp"

namespace chartx::gen {

enum class ChartKind { Bar, Pie };

std::string to_string(ChartKind k);
ChartKind chart_kind_from_string(const std::string& s);

enum class ObjectClass {
  Title,
  XAxisLabel,
  YAxisLabel,
  XTickLabel,
  YTickLabel,
  XTickLine,
  YTickLine,
  LegendLabel,
  LegendMark,
  Bar,
  Pie,
};

std::string to_string(ObjectClass c);
ObjectClass object_class_from_string(const std::string& s);
bool is_text_class(ObjectClass c);

// Class sets scored per chart kind (bar: the 10 detection classes; pie: 4).
const std::vector<ObjectClass>& bar_class_set();
const std::vector<ObjectClass>& pie_class_set();
const std::vector<ObjectClass>& class_set(ChartKind k);

enum class RelationKind {
  BarLegendMark,
  BarXTickLabel,
  YTickLabelLine,
  LegendMarkLabel,
  SliceLegendMark,  // `a` is a slice index into slice_boundary_angles_deg
};

std::string to_string(RelationKind k);
RelationKind relation_kind_from_string(const std::string& s);

struct AnnObject {
  int id = 0;
  ObjectClass cls = ObjectClass::Title;
  geom::Box bbox;
  double orientation_deg = 0;
  std::optional<std::string> text;
};

struct AnnRelation {
  int a = 0;
  int b = 0;
  RelationKind kind = RelationKind::BarLegendMark;
};

struct AnnotationSet {
  std::string image;
  ChartKind kind = ChartKind::Bar;
  std::vector<AnnObject> objects;
  std::vector<AnnRelation> relations;
  std::vector<double> slice_boundary_angles_deg;  // pie only, sorted ascending
  std::map<int, double> bar_values;               // object id -> value

  const AnnObject* find(int id) const;
  std::vector<const AnnObject*> of_class(ObjectClass c) const;

  nlohmann::ordered_json to_json() const;
  static AnnotationSet from_json(const nlohmann::json& j);

  // Checks the ground-truth closure rules; throws InputError on violation.
  void validate(int canvas_w, int canvas_h) const;
};

}  // namespace chartx::gen
