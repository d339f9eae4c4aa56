const int N = 6;

double A[N][N];
double B[N][N];
double C[N][N];
double rowsum[N];
double trace;

int main() {
    for (int i = 0; i < N; i++) {
        for (int j = 0; j < N; j++) {
            A[i][j] = i + 0.1 * j;
            B[i][j] = (i == j) ? 2.0 : 0.5;
        }
    }
    for (int i = 0; i < N; i++) {
        for (int j = 0; j < N; j++) {
            double s = 0.0;
            for (int k = 0; k < N; k++) {
                s += A[i][k] * B[k][j];
            }
            C[i][j] = s;
        }
    }
    for (int i = 0; i < N; i++) {
        for (int j = 0; j < N; j++) {
            B[i][j] = C[j][i];
        }
    }
    trace = 0.0;
    for (int i = 0; i < N; i++) {
        trace += C[i][i];
    }
    for (int i = 0; i < N; i++) {
        rowsum[i] = 0.0;
        for (int j = 0; j < N; j++) {
            rowsum[i] += B[i][j];
        }
    }
    print(trace, rowsum[0]);
    return 0;
}
