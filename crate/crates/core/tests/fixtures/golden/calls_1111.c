const int N = 20;

float x[N];
float y[N];
float z[N];
#pragma acc declare create(z[0:N])

void axpy(float alpha, float u[N], float v[N]) {
    #pragma acc data copyin(u[0:N]) copy(v[0:N])
    #pragma acc kernels
    for (int i = 0; i < N; i++) {
        v[i] = alpha * u[i] + v[i];
    }
}

void scale(float s) {
    #pragma acc data copyin(y[0:N])
    #pragma acc kernels
    for (int i = 0; i < N; i++) {
        z[i] = s * y[i];
    }
    #pragma acc update self(z[0:N])
}

int main() {
    #pragma acc data copyout(x[0:N], y[0:N])
    #pragma acc kernels
    for (int i = 0; i < N; i++) {
        x[i] = 1.0f + i;
        y[i] = 2.0f * i;
    }
    for (int r = 0; r < 3; r++) {
        axpy(0.5f, x, y);
        scale(1.5f);
        #pragma acc update device(z[0:N])
        #pragma acc data copy(x[0:N])
        #pragma acc kernels
        for (int i = 0; i < N; i++) {
            x[i] = z[i] - x[i];
        }
    }
    print(x[0], x[N - 1], y[5], z[7]);
    return 0;
}
