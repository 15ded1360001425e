#include "feinn/gmg.hpp"

namespace feinn {

SparseMatrix prolongation(const FESpacePtr& coarse, const FESpacePtr& fine) {
  if (coarse->order != 1 || fine->order != 1)
    throw std::invalid_argument("prolongation expects order-1 spaces");
  const Mesh& fm = *fine->mesh;
  const Mesh& cm = *coarse->mesh;
  if (!fm.parent_mesh) throw std::invalid_argument("fine mesh is not a refinement of the coarse mesh");

  std::vector<SparseMatrix::Triplet> triplets;
  std::vector<char> done(static_cast<std::size_t>(fine->dof_count()), 0);
  std::vector<double> vals;
  for (int c = 0; c < static_cast<int>(fm.cells.size()); ++c) {
    const Cell& cell = fm.cells[static_cast<std::size_t>(c)];
    const ReferenceElement& el = ReferenceElement::get(cell.shape, 1);
    const int* fdofs = fine->cell_dof_ptr(c);
    for (int i = 0; i < el.node_count(); ++i) {
      const int fd = fdofs[i];
      if (done[static_cast<std::size_t>(fd)]) continue;
      done[static_cast<std::size_t>(fd)] = 1;
      const auto [cc, cref] = fm.to_ancestor(cm, c, el.nodes[static_cast<std::size_t>(i)]);
      const Cell& ccell = cm.cells[static_cast<std::size_t>(cc)];
      const ReferenceElement& cel = ReferenceElement::get(ccell.shape, 1);
      cel.eval(cref, vals, nullptr);
      const int* cdofs = coarse->cell_dof_ptr(cc);
      for (int j = 0; j < cel.node_count(); ++j) {
        if (std::abs(vals[static_cast<std::size_t>(j)]) > 1e-14)
          triplets.emplace_back(fd, cdofs[j], vals[static_cast<std::size_t>(j)]);
      }
    }
  }
  return SparseMatrix::from_triplets(fine->dof_count(), coarse->dof_count(), triplets);
}

namespace {

// Restriction of the full-DOF prolongation to free x free indexing.
SparseMatrix restrict_free(const SparseMatrix& P, const FESpace& fine, const FESpace& coarse) {
  std::vector<SparseMatrix::Triplet> triplets;
  const int* offsets = P.row_offsets();
  const int* cols = P.col_indices();
  const double* vals = P.values();
  for (int r = 0; r < P.rows(); ++r) {
    const int fr = fine.free_index[static_cast<std::size_t>(r)];
    if (fr < 0) continue;
    for (int k = offsets[r]; k < offsets[r + 1]; ++k) {
      const int fc = coarse.free_index[static_cast<std::size_t>(cols[k])];
      if (fc >= 0) triplets.emplace_back(fr, fc, vals[k]);
    }
  }
  return SparseMatrix::from_triplets(fine.free_count(), coarse.free_count(), triplets);
}

} // namespace

GMGHierarchy::GMGHierarchy(const ProblemDefinition& problem, std::vector<FESpacePtr> spaces, GMGOptions opts)
    : opts_(opts) {
  if (spaces.size() < 2) throw std::invalid_argument("multigrid needs at least two levels");
  levels_.resize(spaces.size());
  for (std::size_t l = 0; l < spaces.size(); ++l) {
    WeakForm wf(problem, spaces[l], spaces[l]);
    levels_[l].A = wf.system_matrix();
    levels_[l].At = levels_[l].A.transposed();
    Vec d = levels_[l].A.diagonal();
    levels_[l].inv_diag = d.cwiseInverse();
    if (l > 0) {
      levels_[l].P = restrict_free(prolongation(spaces[l - 1], spaces[l]), *spaces[l], *spaces[l - 1]);
      levels_[l].Pt = levels_[l].P.transposed();
    }
  }
  coarse_.emplace(factorize(levels_[0].A, false));
}

int GMGHierarchy::finest_size() const { return levels_.back().A.rows(); }

void GMGHierarchy::vcycle(int level, const Vec& r, Vec& z, bool transposed) const {
  const Level& L = levels_[static_cast<std::size_t>(level)];
  const SparseMatrix& A = transposed ? L.At : L.A;
  if (level == 0) {
    z = transposed ? coarse_->solve_transpose(r) : coarse_->solve(r);
    return;
  }
  z = Vec::Zero(r.size());
  const int pre = transposed ? opts_.post_sweeps : opts_.pre_sweeps;
  const int post = transposed ? opts_.pre_sweeps : opts_.post_sweeps;
  for (int i = 0; i < pre; ++i) z += opts_.omega * L.inv_diag.cwiseProduct(r - A * z);
  const Vec rc = L.Pt * (r - A * z);
  Vec zc;
  vcycle(level - 1, rc, zc, transposed);
  z += L.P * zc;
  for (int i = 0; i < post; ++i) z += opts_.omega * L.inv_diag.cwiseProduct(r - A * z);
}

Vec GMGHierarchy::run(const Vec& r, bool transposed) const {
  if (r.size() != finest_size()) throw std::invalid_argument("residual size does not match the finest level");
  const Level& top = levels_.back();
  const SparseMatrix& A = transposed ? top.At : top.A;
  Vec z = Vec::Zero(r.size());
  for (int c = 0; c < opts_.cycles; ++c) {
    Vec dz;
    vcycle(static_cast<int>(levels_.size()) - 1, c == 0 ? r : Vec(r - A * z), dz, transposed);
    z += dz;
  }
  return z;
}

Vec GMGHierarchy::apply(const Vec& r) const { return run(r, false); }

Vec GMGHierarchy::apply_transpose(const Vec& r) const { return run(r, true); }

} // namespace feinn
