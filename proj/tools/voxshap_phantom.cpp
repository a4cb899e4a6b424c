// Writes a synthetic phantom (volume, labels, ROI) as VRAW files.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "voxshap/error.hpp"
#include "voxshap/phantom.hpp"
#include "voxshap/vraw.hpp"

int main(int argc, char** argv) {
  CLI::App app{"voxshap-phantom: synthetic CT phantom generator"};
  voxshap::PhantomSpec spec;
  std::string out = "phantom";
  std::vector<std::int64_t> dims{16, 16, 16};
  std::vector<double> spacing{1.0, 1.0, 1.0};
  app.add_option("--out", out, "output directory");
  app.add_option("--dims", dims, "NX NY NZ")->expected(3);
  app.add_option("--spacing", spacing, "SX SY SZ in mm")->expected(3);
  app.add_option("--organs", spec.organs, "number of organ labels");
  app.add_option("--roi-radius", spec.roi_radius, "ROI ball radius in voxels");
  app.add_option("--noise", spec.noise_hu, "intensity noise (HU, std dev)");
  app.add_option("--seed", spec.seed, "random seed");
  CLI11_PARSE(app, argc, argv);
  try {
    spec.dims = {dims[0], dims[1], dims[2]};
    spec.spacing = {spacing[0], spacing[1], spacing[2]};
    const auto p = voxshap::make_phantom(spec);
    const std::filesystem::path dir(out);
    voxshap::vraw::write(dir / "volume", p.volume);
    voxshap::vraw::write(dir / "labels", p.labels);
    voxshap::vraw::write(dir / "roi", p.roi);
    std::cout << "wrote " << (dir / "volume.json").string() << ", labels.json, roi.json\n";
  } catch (const voxshap::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
