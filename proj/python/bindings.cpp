#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dualct/defbp.hpp"
#include "dualct/experiment.hpp"
#include "dualct/metrics.hpp"
#include "dualct/phantoms.hpp"
#include "dualct/sensitivity.hpp"

namespace py = pybind11;
using namespace dualct;

namespace {

ExperimentConfig config_from(const std::string& name_or_json) {
  if (!name_or_json.empty() && name_or_json.front() == '{') {
    return experiment_from_json(nlohmann::json::parse(name_or_json));
  }
  return preset(name_or_json);
}

// 2-D views of flattened images, rows ordered by y like the CSV files.
py::array_t<double> as_image(const Eigen::VectorXd& v, const ImageGrid& g) {
  py::array_t<double> out({g.ny, g.nx});
  auto r = out.mutable_unchecked<2>();
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) r(g.ny - 1 - iy, ix) = v(g.index(ix, iy));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dual-energy CT reconstruction with parametric level sets";

  m.def("klein_nishina", &klein_nishina, py::arg("energy_kev"));
  m.def("photoelectric_basis", &photoelectric_basis, py::arg("energy_kev"));

  py::class_<EnergySpectrum>(m, "EnergySpectrum")
      .def_property_readonly("energies", &EnergySpectrum::energies)
      .def_property_readonly("counts", &EnergySpectrum::counts)
      .def_property_readonly("blank_scan", &EnergySpectrum::blank_scan)
      .def_property_readonly("total_counts", &EnergySpectrum::total_counts);
  m.def("default_low_spectrum", &default_low_spectrum);
  m.def("default_high_spectrum", &default_high_spectrum);
  m.def("load_spectrum", [](const std::filesystem::path& p) { return load_spectrum(p); });

  py::class_<ImageGrid>(m, "ImageGrid")
      .def(py::init<double, double, int, int>(), py::arg("lx"), py::arg("ly"), py::arg("nx"), py::arg("ny"))
      .def_readonly("nx", &ImageGrid::nx)
      .def_readonly("ny", &ImageGrid::ny)
      .def_readonly("lx", &ImageGrid::lx)
      .def_readonly("ly", &ImageGrid::ly)
      .def("image", [](const ImageGrid& g, const Eigen::VectorXd& v) { return as_image(v, g); });

  py::class_<ScanGeometry>(m, "ScanGeometry")
      .def_static("parallel", &ScanGeometry::parallel, py::arg("grid"), py::arg("views"), py::arg("detectors"))
      .def_readonly("angles_rad", &ScanGeometry::angles_rad)
      .def_readonly("detectors_per_view", &ScanGeometry::detectors_per_view);

  py::class_<SystemMatrix, std::shared_ptr<SystemMatrix>>(m, "SystemMatrix")
      .def_property_readonly("matrix", [](const SystemMatrix& s) { return Eigen::SparseMatrix<double>(s.a); })
      .def_property_readonly("rows", &SystemMatrix::rows)
      .def_property_readonly("cols", &SystemMatrix::cols);
  m.def("build_system_matrix", [](const ImageGrid& g, const ScanGeometry& geo) {
    return std::make_shared<SystemMatrix>(build_system_matrix(g, geo));
  });

  py::class_<MeasurementSet>(m, "MeasurementSet")
      .def_readonly("m_low", &MeasurementSet::m_low)
      .def_readonly("m_high", &MeasurementSet::m_high);
  m.def(
      "simulate",
      [](const SystemMatrix& a, const Eigen::VectorXd& c, const Eigen::VectorXd& p, const EnergySpectrum& lo,
         const EnergySpectrum& hi, bool poisson, std::optional<double> snr_db, std::uint64_t seed) {
        return simulate(a, c, p, lo, hi, NoiseSpec{poisson, snr_db, seed});
      },
      py::arg("system"), py::arg("c"), py::arg("p"), py::arg("low"), py::arg("high"), py::arg("poisson") = false,
      py::arg("snr_db") = std::nullopt, py::arg("seed") = 0);

  m.def(
      "phantom",
      [](const ImageGrid& g, const std::string& name, std::uint64_t seed) {
        const PhantomTruth t = rasterize(name == "clutter" ? clutter_phantom(g, seed) : shape_phantom(g));
        py::dict d;
        d["c"] = t.c;
        d["p"] = t.p;
        d["chi"] = Eigen::Array<bool, Eigen::Dynamic, 1>(t.chi);
        return d;
      },
      py::arg("grid"), py::arg("name") = "phantom1", py::arg("seed") = 1);

  m.def(
      "defbp",
      [](const MeasurementSet& data, const ScanGeometry& geo, const ImageGrid& g, const EnergySpectrum& lo,
         const EnergySpectrum& hi) {
        const DefbpResult r = defbp_reconstruct(data, geo, g, lo, hi);
        return py::make_tuple(r.c_image, r.p_image);
      },
      py::arg("data"), py::arg("geometry"), py::arg("grid"), py::arg("low"), py::arg("high"));

  m.def("rel_l2", &rel_l2, py::arg("estimate"), py::arg("truth"));
  m.def("dice", &dice, py::arg("a"), py::arg("b"));
  m.def("binarize_chi", &binarize_chi, py::arg("chi"), py::arg("threshold") = 0.5);

  m.def("preset_names", &preset_names);
  m.def(
      "config_json",
      [](const std::string& name, const std::string& scale) {
        ExperimentConfig c = preset(name);
        if (!scale.empty()) apply_scale(c, scale);
        return to_json(c).dump(2);
      },
      py::arg("name"), py::arg("scale") = "");
  m.def(
      "run_experiment",
      [](const std::string& config, const std::filesystem::path& out) {
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(config_from(config), out);
        }
        if (!r.ok) throw std::runtime_error(r.failed_stage + ": " + r.error);
        py::list rows;
        for (const auto& e : r.metrics) {
          py::dict d;
          d["method"] = e.method;
          d["l2_compton"] = e.l2_compton;
          d["l2_photoelectric"] = e.l2_photoelectric;
          d["dice"] = e.dice ? py::object(py::float_(*e.dice)) : py::none();
          d["detected_pixels"] = e.detected_pixels;
          rows.append(d);
        }
        return rows;
      },
      py::arg("config"), py::arg("out"),
      "Run a preset name or a JSON config string and return its metrics rows.");

  m.def("material_table", []() {
    py::list rows;
    for (const auto& r : material_table(reference_materials(), default_low_spectrum())) {
      rows.append(py::make_tuple(r.name, r.d_max, r.d_max_inv_sq));
    }
    return rows;
  });
}
