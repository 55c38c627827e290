import numpy as np
import pytest

from peftbench.tensor import (
    Matrix,
    SeededRng,
    ShapeError,
    add,
    frobenius_distance,
    kron,
    low_rank_product,
    matmul,
    scale,
)


def naive_matmul(a: Matrix, b: Matrix) -> list[list[float]]:
    out = [[0.0] * b.cols for _ in range(a.rows)]
    for i in range(a.rows):
        for j in range(b.cols):
            s = 0.0
            for t in range(a.cols):
                s += a.at(i, t) * b.at(t, j)
            out[i][j] = s
    return out


def naive_kron(a: Matrix, b: Matrix) -> list[list[float]]:
    out = [[0.0] * (a.cols * b.cols) for _ in range(a.rows * b.rows)]
    for i in range(a.rows):
        for j in range(a.cols):
            for u in range(b.rows):
                for v in range(b.cols):
                    out[i * b.rows + u][j * b.cols + v] = a.at(i, j) * b.at(u, v)
    return out


class TestMatrix:
    def test_constructor_rejects_bad_length(self):
        with pytest.raises(ShapeError):
            Matrix(2, 2, [1.0, 2.0, 3.0])

    def test_constructor_rejects_nonpositive_dims(self):
        with pytest.raises(ShapeError):
            Matrix(0, 3, [])

    def test_data_is_row_major(self):
        m = Matrix.from_rows([[1, 2], [3, 4]])
        assert m.data.tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_array_is_read_only(self):
        m = Matrix.zeros(2, 2)
        with pytest.raises(ValueError):
            m.array[0, 0] = 1.0


class TestMatmul:
    def test_identity(self):
        rng = SeededRng(1)
        m = rng.normal_matrix(3, 3)
        assert matmul(Matrix.identity(3), m).equals(m)

    def test_hand_checked_2x2(self):
        result = matmul(Matrix.from_rows([[1, 2], [3, 4]]), Matrix.from_rows([[0], [1]]))
        assert result.to_lists() == [[2.0], [4.0]]

    def test_against_triple_loop_oracle(self):
        rng = SeededRng(2)
        a = rng.normal_matrix(5, 7)
        b = rng.normal_matrix(7, 3)
        got = matmul(a, b)
        expected = naive_matmul(a, b)
        for i in range(5):
            for j in range(3):
                assert got.at(i, j) == pytest.approx(expected[i][j], abs=1e-12)

    def test_dimension_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match="2x3.*4x2"):
            matmul(Matrix.zeros(2, 3), Matrix.zeros(4, 2))

    def test_associativity(self):
        rng = SeededRng(3)
        for _ in range(10):
            a = rng.normal_matrix(4, 4)
            b = rng.normal_matrix(4, 4)
            c = rng.normal_matrix(4, 4)
            left = matmul(matmul(a, b), c)
            right = matmul(a, matmul(b, c))
            assert left.allclose(right, tol=1e-10)


class TestKron:
    def test_identity_gives_block_diagonal(self):
        rng = SeededRng(4)
        b = rng.normal_matrix(2, 3)
        k = kron(Matrix.identity(2), b)
        assert k.shape == (4, 6)
        top_left = [[k.at(i, j) for j in range(3)] for i in range(2)]
        assert top_left == b.to_lists()
        assert all(k.at(i, j) == 0.0 for i in range(2) for j in range(3, 6))

    def test_hand_checked(self):
        k = kron(Matrix.from_rows([[1, 2], [3, 4]]),
                 Matrix.from_rows([[0, 1], [1, 0]]))
        assert k.to_lists() == [
            [0.0, 1.0, 0.0, 2.0],
            [1.0, 0.0, 2.0, 0.0],
            [0.0, 3.0, 0.0, 4.0],
            [3.0, 0.0, 4.0, 0.0],
        ]

    def test_against_elementwise_oracle(self):
        rng = SeededRng(5)
        a = rng.normal_matrix(3, 2)
        b = rng.normal_matrix(2, 4)
        got = kron(a, b)
        expected = np.array(naive_kron(a, b))
        assert np.abs(got.array - expected).max() <= 1e-15

    def test_mixed_product_property(self):
        rng = SeededRng(6)
        for _ in range(20):
            a, b, c, d = (rng.normal_matrix(2, 2) for _ in range(4))
            left = matmul(kron(a, b), kron(c, d))
            right = kron(matmul(a, c), matmul(b, d))
            assert left.allclose(right, tol=1e-12)

    def test_result_size_cap(self):
        big = Matrix.zeros(3000, 3000)
        with pytest.raises(ShapeError, match="cap"):
            kron(big, Matrix.zeros(2, 2))


def minor_2x2(m: Matrix, r1, r2, c1, c2) -> float:
    return m.at(r1, c1) * m.at(r2, c2) - m.at(r1, c2) * m.at(r2, c1)


class TestLowRankProduct:
    def test_zero_factor_gives_zero(self):
        z = low_rank_product(Matrix.zeros(3, 2), Matrix.from_rows([[1, 2], [3, 4]]))
        assert z.equals(Matrix.zeros(3, 2))

    def test_outer_product_is_rank_one(self):
        col = Matrix.from_rows([[1.0], [2.0], [3.0]])
        row = Matrix.from_rows([[4.0, 5.0, 6.0, 7.0]])
        m = low_rank_product(col, row)
        assert m.shape == (3, 4)
        for r1 in range(3):
            for r2 in range(r1 + 1, 3):
                for c1 in range(4):
                    for c2 in range(c1 + 1, 4):
                        assert minor_2x2(m, r1, r2, c1, c2) == pytest.approx(0.0, abs=1e-12)

    def test_matches_matmul_oracle(self):
        rng = SeededRng(7)
        wa = rng.normal_matrix(8, 4)
        wb = rng.normal_matrix(4, 8)
        got = low_rank_product(wa, wb)
        expected = naive_matmul(wa, wb)
        for i in range(8):
            for j in range(8):
                assert got.at(i, j) == pytest.approx(expected[i][j], abs=1e-12)


class TestElementwise:
    def test_add_zero(self):
        m = SeededRng(8).normal_matrix(3, 3)
        assert add(m, Matrix.zeros(3, 3)).equals(m)

    def test_scale_zero(self):
        m = SeededRng(9).normal_matrix(3, 3)
        assert scale(m, 0.0).equals(Matrix.zeros(3, 3))

    def test_distance_to_self_is_zero(self):
        m = SeededRng(10).normal_matrix(4, 2)
        assert frobenius_distance(m, m) == 0.0

    def test_distance_hand_value(self):
        a = Matrix.from_rows([[0.0, 3.0]])
        b = Matrix.from_rows([[4.0, 0.0]])
        assert frobenius_distance(a, b) == pytest.approx(5.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            add(Matrix.zeros(2, 2), Matrix.zeros(2, 3))
        with pytest.raises(ShapeError):
            frobenius_distance(Matrix.zeros(2, 2), Matrix.zeros(3, 2))

    def test_operations_preserve_finiteness(self):
        rng = SeededRng(11)
        a = rng.normal_matrix(6, 6, sigma=100.0)
        b = rng.normal_matrix(6, 6, sigma=100.0)
        for m in (matmul(a, b), kron(a, b), add(a, b), scale(a, -3.5)):
            assert np.isfinite(m.array).all()


class TestSeededRng:
    def test_same_seed_same_draws(self):
        r1, r2 = SeededRng(12345), SeededRng(12345)
        assert all(r1.next_u64() == r2.next_u64() for _ in range(10_000))

    def test_same_seed_same_uniform_and_normal(self):
        r1, r2 = SeededRng(99), SeededRng(99)
        assert [r1.uniform() for _ in range(100)] == [r2.uniform() for _ in range(100)]
        assert [r1.normal() for _ in range(100)] == [r2.normal() for _ in range(100)]

    def test_different_seeds_differ(self):
        draws1 = [SeededRng(1).next_u64() for _ in range(4)]
        draws2 = [SeededRng(2).next_u64() for _ in range(4)]
        assert draws1 != draws2

    def test_uniform_in_unit_interval(self):
        rng = SeededRng(13)
        for _ in range(1000):
            u = rng.uniform()
            assert 0.0 <= u < 1.0

    def test_normal_moments_roughly_standard(self):
        rng = SeededRng(14)
        xs = [rng.normal() for _ in range(20_000)]
        assert abs(sum(xs) / len(xs)) < 0.05
        var = sum(x * x for x in xs) / len(xs)
        assert abs(var - 1.0) < 0.05

    def test_shuffle_is_deterministic_permutation(self):
        a = list(range(50))
        b = list(range(50))
        SeededRng(15).shuffle(a)
        SeededRng(15).shuffle(b)
        assert a == b
        assert sorted(a) == list(range(50))

    def test_randint_bounds(self):
        rng = SeededRng(16)
        assert all(0 <= rng.randint(7) < 7 for _ in range(500))
        with pytest.raises(ValueError):
            rng.randint(0)

    def test_choice_index_degenerate_weight(self):
        rng = SeededRng(17)
        assert rng.choice_index([0.0, 5.0, 0.0]) == 1
