const int N = 16;

double result[N];
int iterations;

int main() {
    double u[N];
    double v[N];
    double tmp[N];
    double err = 1.0;
    int it = 0;
    for (int i = 0; i < N; i++) {
        u[i] = (i % 3) * 1.0;
        v[i] = 0.0;
    }
    while (err > 0.001 && it < 50) {
        for (int i = 1; i < N - 1; i++) {
            tmp[i] = 0.5 * (u[i - 1] + u[i + 1]);
        }
        for (int i = 1; i < N - 1; i++) {
            v[i] = tmp[i];
        }
        err = 0.0;
        for (int i = 1; i < N - 1; i++) {
            err = err + fabs(v[i] - u[i]);
        }
        if (it % 4 == 0) {
            for (int i = 0; i < N; i++) {
                u[i] = v[i];
            }
        } else {
            for (int i = 1; i < N - 1; i++) {
                u[i] = 0.5 * (u[i] + v[i]);
            }
        }
        it++;
    }
    for (int i = 0; i < N; i++) {
        result[i] = u[i] + tmp[i] * 0.0;
    }
    iterations = it;
    print(err, it);
    return 0;
}
